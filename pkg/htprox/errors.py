"""Exception hierarchy shared by the library and the CLI."""


class HtproxError(Exception):
    """Base class for every error raised by htprox."""


class ParameterRangeError(HtproxError, ValueError):
    """A parameter lies outside its documented range."""


class NoClosedFormError(HtproxError):
    """No analytic expression exists for the requested quantity."""

    def __init__(self, what: str):
        self.what = what
        super().__init__(f"{what}: no closed form; use monte_carlo")

    def __reduce__(self):
        return (self.__class__, (self.what,))


class OracleBudgetExceeded(HtproxError, RuntimeError):
    """A rejection oracle hit its proposal cap.

    `chain` and `iteration` are filled in by `run_chains` when the error
    surfaces from inside a chain.
    """

    def __init__(self, budget: int, chain=None, iteration=None):
        self.budget = budget
        self.chain = chain
        self.iteration = iteration
        where = ""
        if chain is not None and iteration is not None:
            where = f" (chain {chain}, iteration {iteration})"
        super().__init__(
            f"oracle nonterminating after {budget} proposals{where}; reduce η "
            "(see step_size_policy: η = c0 · d^(-1/2) · L^(-1/β))"
        )

    def __reduce__(self):
        # keep the context when crossing a process boundary
        return (self.__class__, (self.budget, self.chain, self.iteration))


class UnsupportedDimensionError(HtproxError):
    """An estimator was called in a dimension it does not support."""


class MissingRegularityError(HtproxError):
    """A target lacks the regularity data an operation needs."""


class ConfigError(HtproxError):
    """The experiment configuration is malformed or inconsistent."""
