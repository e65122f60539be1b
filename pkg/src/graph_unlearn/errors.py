"""Exception hierarchy shared by all graph_unlearn modules."""


class GraphUnlearnError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(GraphUnlearnError):
    """Operands have incompatible or degenerate dimensions."""


class ValidationError(GraphUnlearnError):
    """An input violates a documented invariant or precondition."""


class NumericError(GraphUnlearnError):
    """A computation produced or received non-finite values."""


class UnsupportedClassError(ValidationError):
    """A class-mean lookup hit a class with zero test-set support."""

    def __init__(self, class_index: int):
        self.class_index = int(class_index)
        super().__init__(
            f"class {self.class_index} has no test-set support; "
            "its mean posterior is undefined"
        )
