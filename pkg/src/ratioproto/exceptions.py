class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class NumericalError(ArithmeticError):
    """A non-finite value appeared during training or evaluation."""

    def __init__(self, message: str, episode: int | None = None):
        self.episode = episode
        if episode is not None:
            message = f"{message} (episode {episode}, checkpoint {episode // 100})"
        super().__init__(message)
