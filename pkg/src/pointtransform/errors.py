"""Exception hierarchy shared by every module of the package."""


class PointTransformError(Exception):
    """Base class for all package errors."""


class ExprSyntaxError(PointTransformError, ValueError):
    def __init__(self, position, message):
        self.position = position
        self.message = message
        super().__init__(f"at position {position}: {message}")


class ArityError(PointTransformError, ValueError):
    pass


class DomainError(PointTransformError, ArithmeticError):
    """Expression evaluated outside its domain (log/sqrt/division)."""

    def __init__(self, node, point, reason):
        self.node = node
        self.point = point
        self.reason = reason
        super().__init__(f"{reason} in {node} at point {point}")


class ConfigError(PointTransformError, ValueError):
    def __init__(self, message, field=None):
        self.field = field
        prefix = f"[{field}] " if field else ""
        super().__init__(prefix + message)


class SingularJacobian(PointTransformError, ArithmeticError):
    def __init__(self, point, det_j, reason=None):
        self.point = point
        self.det_j = det_j
        self.reason = reason
        msg = f"Jacobian determinant {det_j!r} not above threshold at x = {point}"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)


class ConvergenceError(PointTransformError, ArithmeticError):
    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"Newton inversion did not converge after {iterations} iterations "
            f"(residual {residual:.3e})")


class DimensionError(PointTransformError, ValueError):
    pass


class GridMismatch(PointTransformError, ValueError):
    pass


class SupportError(PointTransformError, ValueError):
    pass
