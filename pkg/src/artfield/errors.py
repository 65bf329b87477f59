class ArtFieldError(Exception):
    pass


class InvalidInputError(ArtFieldError, ValueError):
    pass


class DegenerateJointError(ArtFieldError):
    pass


class ConfigError(ArtFieldError, ValueError):
    pass


class DivergenceError(ArtFieldError, FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, stage: str, step: int, terms: dict):
        self.stage, self.step, self.terms = stage, step, terms
        super().__init__(f"non-finite loss in stage {stage!r} at step {step}: {terms}")


class CheckpointError(ArtFieldError):
    pass
