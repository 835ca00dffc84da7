"""Exception types raised across the package."""


class UMLEError(Exception):
    """Base class for all package errors."""


class DatasetEmpty(UMLEError):
    pass


class PatchTooLarge(UMLEError):
    pass


class CheckpointCorrupt(UMLEError):
    pass


class ConfigMismatch(UMLEError):
    pass


class ConfigError(UMLEError):
    pass


class InvalidKernelSpec(UMLEError):
    pass


class PyramidShapeError(UMLEError):
    pass


class ShapeError(UMLEError):
    pass


class NonFiniteGradient(UMLEError):
    """A gradient contained NaN or inf; carries the parameter name and iteration."""

    def __init__(self, name, iteration=None):
        self.name = name
        self.iteration = iteration
        where = f" at iteration {iteration}" if iteration is not None else ""
        super().__init__(f"non-finite gradient in {name!r}{where}")


class ImageTooSmall(UMLEError):
    pass


class InvalidCount(UMLEError):
    pass
