"""Exception hierarchy shared by all modules."""


class DmcError(Exception):
    """Base class for every error raised by :mod:`dmc_infer`."""


class UnknownVertexError(DmcError, KeyError):
    def __init__(self, vertex):
        super().__init__(vertex)
        self.vertex = vertex

    def __str__(self):
        return f"unknown vertex {self.vertex!r}"


class DuplicateIdError(DmcError, ValueError):
    pass


class NotACherryLeafError(DmcError, ValueError):
    pass


class NoCherryError(DmcError, ValueError):
    pass


class ValidationError(DmcError, ValueError):
    """Invariant violation; ``problems`` lists every violated invariant."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ParseError(DmcError, ValueError):
    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class PreconditionError(DmcError, ValueError):
    pass


class SizeGuardError(DmcError, ValueError):
    pass


class AllZeroWeightsError(DmcError, ArithmeticError):
    """Every particle weight is zero, so the likelihood estimate is 0."""
