"""Exception types shared across the package.

Parse errors for call expressions are kept distinct so the evaluation
harness can attribute failures to a cause (wrong function, bad arity,
bad types, ungrammatical text).
"""


class CallmaskError(Exception):
    """Base class for all package errors."""


# --- schema -----------------------------------------------------------------

class SchemaViolation(CallmaskError):
    """A schema, registry, or call value breaks a structural invariant."""


class DuplicateFunctionName(SchemaViolation):
    """Two registered functions share a name."""


class MalformedStub(SchemaViolation):
    """Stub text is missing its docstring/Args block or uses unknown types."""


class CallError(CallmaskError):
    """Base class for call-expression parse/validation failures."""


class ParseError(CallError):
    """Response text is not grammatical call syntax."""


class UnknownFunction(CallError):
    """Called function is not in the registry."""


class ArityMismatch(CallError):
    """Argument count differs from the schema."""


class TypeMismatch(CallError):
    """An argument value does not fit the declared argument type."""


# --- trie -------------------------------------------------------------------

class EmptyWord(CallmaskError):
    """Empty strings cannot be inserted into a prefix index."""


# --- typematch --------------------------------------------------------------

class DeadState(CallmaskError):
    """Operation requires a viable matcher but the state is dead."""


# --- decoder ----------------------------------------------------------------

class UnspellableRegistry(CallmaskError):
    """The vocabulary cannot cover characters required by the registry."""


class ConstraintDeadlock(CallmaskError):
    """Every vocabulary token is masked; vocabulary and grammar disagree."""


class MaskedTokenStep(CallmaskError):
    """step() was fed a token the current mask forbids."""


class BudgetExhausted(CallmaskError):
    """Decode did not finish within the token budget."""

    def __init__(self, message: str, partial_text: str = "", trace=None):
        super().__init__(message)
        self.partial_text = partial_text
        self.trace = trace


class InvalidDistribution(CallmaskError):
    """A language model returned a malformed probability vector."""


# --- metrics ----------------------------------------------------------------

class ZeroProbabilityGold(CallmaskError):
    """Loss is undefined: the gold token has zero probability."""


class GoldMasked(CallmaskError):
    """Masked metrics are undefined when the gold token is masked out."""


class LengthMismatch(CallmaskError):
    """Paired sequences (trace vs gold tokens, vectors) differ in length."""


# --- dataset ----------------------------------------------------------------

class MissingSentinel(CallmaskError):
    """A prompt's function list lacks the fallback function."""


class RegistryTooSmall(CallmaskError):
    """Not enough candidate functions to satisfy the sampling request."""


class UnbalancedSpecs(CallmaskError):
    """Positive/negative spec counts do not match the configured ratio."""


# --- evalharness ------------------------------------------------------------

class BadSpec(CallmaskError):
    """A model spec string could not be parsed."""
