from dialog_hmm.models.dialog import BeliefState
from dialog_hmm.services.inference_service import forward


class BeliefTracker:
    """Rastreador de estado de diálogo por filtragem bayesiana.

    A crença no turno k é a linha k do forward renormalizado, Pr(X_k | Y_{1:k});
    ou seja, o mesmo caminho de código da inferência.
    """

    def __init__(self, model):
        self.model = model

    def track(self, observed):
        """Lista de crenças, uma por turno (ZeroProbabilitySequence é propagada)"""
        result = forward(self.model, observed)
        return [
            BeliefState(distribution=row, turn_index=turn)
            for turn, row in enumerate(result.scaled_alpha)
        ]

    def best_states(self, observed):
        """Hipótese mais provável em cada turno"""
        return [belief.best_state for belief in self.track(observed)]


def track_beliefs(model, observed):
    return BeliefTracker(model).track(observed)
