import math
from collections.abc import Callable, Mapping

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..errors import ConfigurationError, PrescriptionDomainError
from .utils import canonical_key

ACTIONS: tuple[int, int] = (-1, 1)

MASS_TOLERANCE = 1e-9
ROW_TOLERANCE = 1e-12


class ModelParams(BaseModel):
    """Environment constants: signal crossover probability ``p`` and discount factor ``delta``."""

    model_config = ConfigDict(frozen=True)

    p: float = Field(..., description="Crossover probability of the binary symmetric signal channel")
    delta: float = Field(0.9, description="Discount factor")

    @model_validator(mode="after")
    def _check_ranges(self) -> "ModelParams":
        if not 0.0 < self.p < 0.5:
            raise ValueError(f"p must lie in (0, 0.5), got {self.p}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        return self

    @property
    def pbar(self) -> float:
        return 1.0 - self.p

    @property
    def log_ratio(self) -> float:
        """``log(pbar / p)``, the log-likelihood ratio carried by one signal."""
        return math.log(self.pbar / self.p)

    def signal_likelihood(self, y: int, w: int) -> float:
        """``Q^y(y | w)``: probability of observing signal ``y`` in state ``w``."""
        return self.pbar if y == w else self.p


class SummaryBelief(BaseModel):
    """
    Public belief over the integer summary ``n`` (running sum of reported signals).

    The support is finite, shares a single parity and the masses sum to one.
    """

    model_config = ConfigDict(frozen=True)

    mass: dict[int, float]

    @model_validator(mode="after")
    def _check_distribution(self) -> "SummaryBelief":
        if not self.mass:
            raise ValueError("belief support is empty")
        for n, v in self.mass.items():
            if not (-MASS_TOLERANCE <= v <= 1.0 + MASS_TOLERANCE):
                raise ValueError(f"mass at n={n} is not a probability: {v}")
        total = math.fsum(self.mass.values())
        if abs(total - 1.0) > MASS_TOLERANCE:
            raise ValueError(f"belief masses sum to {total}, not 1")
        if len({n % 2 for n in self.mass}) > 1:
            raise ValueError(f"belief support mixes parities: {sorted(self.mass)}")
        return self

    @classmethod
    def point(cls, n: int) -> "SummaryBelief":
        """The degenerate belief ``1_n``."""
        return cls(mass={n: 1.0})

    @classmethod
    def from_mapping(cls, mass: Mapping[int, float]) -> "SummaryBelief":
        """Build a belief from any mapping, raising :class:`ConfigurationError` on invalid input."""
        try:
            return cls(mass={int(n): float(v) for n, v in mass.items()})
        except ValueError as e:
            raise ConfigurationError(str(e)) from e

    def __getitem__(self, n: int) -> float:
        return self.mass.get(n, 0.0)

    def __hash__(self) -> int:
        return hash(self.key())

    def items(self) -> list[tuple[int, float]]:
        return sorted(self.mass.items())

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(sorted(self.mass))

    @property
    def parity(self) -> int:
        return next(iter(self.mass)) % 2

    def key(self) -> tuple[tuple[int, float], ...]:
        """Canonical hashable form: sorted support, masses rounded to 1e-12."""
        return canonical_key(self.mass)

    def mirror(self) -> "SummaryBelief":
        """The reflected belief ``n -> -n``."""
        return SummaryBelief.model_construct(mass={-n: v for n, v in sorted(self.mass.items(), reverse=True)})

    def total_variation(self, other: "SummaryBelief") -> float:
        keys = set(self.mass) | set(other.mass)
        return 0.5 * sum(abs(self[n] - other[n]) for n in keys)


class Prescription(BaseModel):
    """
    Summary-based partial strategy: a recommendation rule ``(n, m) -> distribution over {-1, +1}``.

    Either ``rule`` (defined for every integer summary) or ``table`` (defined on an explicit
    domain) is set. Both store the probability of recommending ``+1``.
    """

    model_config = ConfigDict(frozen=True)

    name: str
    rule: Callable[[int, int], float] | None = None
    table: dict[tuple[int, int], float] | None = None
    deterministic: bool = True

    @model_validator(mode="after")
    def _check_rows(self) -> "Prescription":
        if (self.rule is None) == (self.table is None):
            raise ValueError("exactly one of rule or table must be given")
        if self.table is not None:
            for (n, m), prob_plus in self.table.items():
                if m not in ACTIONS:
                    raise ValueError(f"message must be -1 or +1, got {m}")
                if not (-ROW_TOLERANCE <= prob_plus <= 1.0 + ROW_TOLERANCE):
                    raise ValueError(f"row ({n}, {m}) is not a distribution: P(+1)={prob_plus}")
            if self.deterministic and any(v not in (0.0, 1.0) for v in self.table.values()):
                raise ValueError("table marked deterministic has a randomized row")
        return self

    @classmethod
    def from_rule(cls, name: str, rule: Callable[[int, int], float], deterministic: bool = True) -> "Prescription":
        return cls(name=name, rule=rule, deterministic=deterministic)

    @classmethod
    def from_actions(cls, name: str, actions: Mapping[tuple[int, int], int]) -> "Prescription":
        """Deterministic table prescription from recommended actions."""
        return cls(name=name, table={key: 1.0 if a == 1 else 0.0 for key, a in actions.items()}, deterministic=True)

    @classmethod
    def from_table(cls, name: str, table: Mapping[tuple[int, int], float]) -> "Prescription":
        """Table prescription from ``P(+1 | n, m)`` entries."""
        table = dict(table)
        return cls(name=name, table=table, deterministic=all(v in (0.0, 1.0) for v in table.values()))

    def prob_plus(self, n: int, m: int) -> float:
        """Probability of recommending ``+1`` at summary ``n`` and message ``m``."""
        if self.table is not None:
            try:
                return self.table[(n, m)]
            except KeyError:
                raise PrescriptionDomainError(f"prescription {self.name!r} is undefined at (n={n}, m={m})") from None
        assert self.rule is not None
        return self.rule(n, m)

    def prob(self, action: int, n: int, m: int) -> float:
        prob_plus = self.prob_plus(n, m)
        return prob_plus if action == 1 else 1.0 - prob_plus

    def recommend(self, n: int, m: int) -> int:
        """The recommended action of a deterministic prescription."""
        if not self.deterministic:
            raise ValueError(f"prescription {self.name!r} is randomized")
        return 1 if self.prob_plus(n, m) >= 0.5 else -1

    def actions(self, support: tuple[int, ...]) -> tuple[int, ...]:
        """The action table over ``support`` in ``(n, m)`` order, ``m = -1`` first."""
        return tuple(self.recommend(n, m) for n in support for m in ACTIONS)


class MechanismPolicy(BaseModel):
    """A map from public summary beliefs to prescriptions."""

    model_config = ConfigDict(frozen=True)

    name: str = Field(..., min_length=1)
    rule: Callable[[SummaryBelief], Prescription]

    def __call__(self, eta: SummaryBelief) -> Prescription:
        return self.rule(eta)

    def __repr__(self) -> str:
        return f"MechanismPolicy(name={self.name!r})"

