"""Toolkit de HMM discreto com EM e experimentos de rastreamento de diálogo."""

__version__ = "1.0.0"
