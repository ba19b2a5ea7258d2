class InterpolationError(ValueError):
    """Base class for every error raised by the laboratory."""


class DimensionMismatchError(InterpolationError):
    pass


class UnsupportedKindError(InterpolationError):
    pass


class AnnulusDomainError(InterpolationError):
    pass


class AliasingError(InterpolationError):
    pass


class ConfigError(InterpolationError):
    pass


def check_dim(expected: int, got: int, what: str = 'vector') -> None:
    if expected != got:
        raise DimensionMismatchError(f'{what} has dimension {got}, expected {expected}')
