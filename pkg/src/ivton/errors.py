"""Exception hierarchy shared across the pipeline."""


class IvtonError(Exception):
    """Base class for all errors raised by ivton."""


class ContractError(IvtonError, ValueError):
    """Input violates a precondition: dimension mismatch, unknown label, bad schema."""


class RuleError(ContractError):
    """No rule-table row matched a garment/instruction combination."""


class BindingError(ContractError):
    """Style clauses could not be attached to garments."""


class AmbiguousBindingError(BindingError):
    pass


class UnknownGarmentError(BindingError):
    pass


class BackendError(IvtonError):
    """A backend (segmentation, VTO, VLM, dummy provider) failed."""

    def __init__(self, provider, message):
        super().__init__(f"[{provider}] {message}")
        self.provider = provider


class StepError(IvtonError):
    """A plan step failed; carries the step index and stage."""

    def __init__(self, step_index, stage, cause):
        super().__init__(f"step {step_index} ({stage}): {cause}")
        self.step_index = step_index
        self.stage = stage
        self.cause = cause


class PlanExecutionError(IvtonError):
    """Plan aborted. ``artifacts`` holds what completed before the failure."""

    def __init__(self, error, artifacts, image_ref):
        super().__init__(str(error))
        self.error = error
        self.artifacts = artifacts
        self.image_ref = image_ref
