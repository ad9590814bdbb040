"""Exception hierarchy shared by every spikelab module.

Subcritical spikes are valid outputs, not errors: only violated
preconditions, numerical breakdowns and bad configuration raise.
"""


class SpikeLabError(Exception):
    """Base class for spikelab errors."""

    pass


class DomainError(SpikeLabError, ValueError):
    """An argument lies outside the domain of the operation."""

    pass


class OutOfRangeError(DomainError):
    """A value falls outside the image of a monotone branch."""

    def __init__(
        self,
        value: float,
        interval: tuple[float, float],
        what: str = "value",
    ):
        self.value = value
        self.interval = interval
        lo, hi = interval
        super().__init__(f"{what} {value!r} is outside ({lo!r}, {hi!r})")


class PoleError(DomainError):
    """Evaluation point coincides with an eigenvalue of X."""

    def __init__(self, z: complex, pole: float):
        self.z = z
        self.pole = pole
        super().__init__(f"z={z!r} is within 1e-14 of eigenvalue {pole!r}")


class NumericalFailureError(SpikeLabError, ArithmeticError):
    """Quadrature, bracketing or an eigensolver did not converge."""

    pass


class DegenerateEigenvalueError(SpikeLabError):
    """The master matrix has a kernel of dimension other than one."""

    def __init__(self, z: float, singular_values):
        self.z = z
        self.singular_values = list(singular_values)
        tail = ", ".join(f"{s:.3e}" for s in self.singular_values[-2:])
        super().__init__(
            f"kernel of M_n({z!r}) is not one-dimensional "
            f"(smallest singular values: {tail})"
        )


class ConfigError(SpikeLabError, ValueError):
    """Malformed experiment or measure file."""

    def __init__(
        self,
        message: str,
        path: str | None = None,
        line: int | None = None,
    ):
        self.path = path
        self.line = line
        where = path or "<config>"
        if line is not None:
            where = f"{where}, line {line}"
        super().__init__(f"{where}: {message}")
