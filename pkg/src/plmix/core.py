"""Domain types, validation and JSON-Lines serialization.

Alternatives are 1-based integers ``1..m`` everywhere in this package, both in
the public types and in the external formats. Numeric kernels convert to
0-based arrays internally.
"""

from __future__ import annotations

import io
import json
import math
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from typing import IO, Union

import numpy as np

SUM_TOL = 1e-9


class MixPLError(ValueError):
    """Base class for data and model errors raised by this package."""


class DimensionError(MixPLError):
    pass


class InvariantError(MixPLError):
    pass


class ParseError(MixPLError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OverlapError(MixPLError):
    def __init__(self, first: "StructureId", second: "StructureId"):
        self.pair = (first, second)
        super().__init__(f"overlapping structures {first} and {second}")


class SumError(MixPLError):
    def __init__(self, total: float):
        self.deviation = total - 1.0
        super().__init__(f"probabilities sum to {total!r} (deviation {self.deviation:.3e})")


class NonPositiveError(MixPLError):
    def __init__(self, structure: "StructureId", value: float):
        self.structure = structure
        self.value = value
        super().__init__(f"non-positive probability {value!r} for {structure}")


class UnknownStructureError(MixPLError):
    pass


class TooLargeError(MixPLError):
    pass


# ---------------------------------------------------------------------------
# orders and structures


def _check_indices(items: Iterable[int], m: int, what: str) -> None:
    seen = set()
    for a in items:
        if isinstance(a, bool) or not isinstance(a, (int, np.integer)):
            raise InvariantError(f"{what}: index {a!r} is not an integer")
        if not 1 <= a <= m:
            raise InvariantError(f"{what}: index {a} outside 1..{m}")
        if a in seen:
            raise InvariantError(f"{what}: duplicate index {a}")
        seen.add(a)


@dataclass(frozen=True, slots=True)
class StructureId:
    """A partial-order structure: ``kind`` in {top, way, choice}, size ``l`` and
    the subset it ranges over (all alternatives for ``top``)."""

    kind: str
    l: int
    subset: frozenset

    @classmethod
    def top(cls, l: int, m: int) -> "StructureId":
        return cls("top", l, frozenset(range(1, m + 1)))

    @classmethod
    def way(cls, subset: Iterable[int]) -> "StructureId":
        s = frozenset(subset)
        return cls("way", len(s), s)

    @classmethod
    def choice(cls, subset: Iterable[int]) -> "StructureId":
        s = frozenset(subset)
        return cls("choice", len(s), s)

    def validate(self, m: int) -> None:
        if self.kind not in ("top", "way", "choice"):
            raise InvariantError(f"unknown structure kind {self.kind!r}")
        _check_indices(self.subset, m, str(self))
        if self.kind == "top":
            if not 1 <= self.l <= m - 1:
                raise InvariantError(f"top-l needs 1 <= l <= {m - 1}, got {self.l}")
            if len(self.subset) != m:
                raise InvariantError("top-l structure must range over all alternatives")
        else:
            if self.l != len(self.subset) or not 1 <= self.l <= m:
                raise InvariantError(f"{self}: size does not match subset")

    def key(self) -> str:
        """Compact string form used as a JSON object key."""
        if self.kind == "top":
            return f"top-{self.l}"
        return f"{self.kind}:" + ",".join(str(a) for a in sorted(self.subset))

    @classmethod
    def from_key(cls, key: str, m: int) -> "StructureId":
        try:
            if key.startswith("top-"):
                return cls.top(int(key[4:]), m)
            kind, _, rest = key.partition(":")
            if kind in ("way", "choice") and rest:
                subset = [int(x) for x in rest.split(",")]
                if len(set(subset)) != len(subset):
                    raise InvariantError(f"duplicate index in structure key {key!r}")
                return cls(kind, len(subset), frozenset(subset))
        except ValueError as exc:
            if isinstance(exc, MixPLError):
                raise
            raise ParseError(f"bad structure key {key!r}") from exc
        raise ParseError(f"bad structure key {key!r}")

    def __str__(self) -> str:
        if self.kind == "top":
            return f"(top-{self.l}, A)"
        members = ",".join(str(a) for a in sorted(self.subset))
        name = f"{self.l}-way" if self.kind == "way" else f"choice-{self.l}"
        return f"({name}, {{{members}}})"

    def sort_key(self) -> tuple:
        return ({"top": 0, "way": 1, "choice": 2}[self.kind], self.l, tuple(sorted(self.subset)))


@dataclass(frozen=True, slots=True)
class TopL:
    """``ranked[0] > ranked[1] > ... > ranked[l-1] > all others``."""

    ranked: tuple

    def __post_init__(self):
        object.__setattr__(self, "ranked", tuple(int(a) for a in self.ranked))

    def structure(self, m: int) -> StructureId:
        return StructureId.top(len(self.ranked), m)

    def validate(self, m: int) -> None:
        _check_indices(self.ranked, m, "top order")
        if not 1 <= len(self.ranked) <= m - 1:
            raise InvariantError(f"top order needs 1 <= l <= {m - 1}, got {len(self.ranked)}")


@dataclass(frozen=True, slots=True)
class LWay:
    """A ranking of the subset ``set(ranked)``; silent on everything else."""

    ranked: tuple

    def __post_init__(self):
        object.__setattr__(self, "ranked", tuple(int(a) for a in self.ranked))

    @property
    def subset(self) -> frozenset:
        return frozenset(self.ranked)

    def structure(self, m: int) -> StructureId:
        return StructureId.way(self.ranked)

    def validate(self, m: int) -> None:
        _check_indices(self.ranked, m, "l-way order")
        if not 1 <= len(self.ranked) <= m:
            raise InvariantError("l-way order must rank at least one alternative")


@dataclass(frozen=True, slots=True)
class ChoiceL:
    """``chosen`` was picked from ``subset``."""

    subset: frozenset
    chosen: int

    def __post_init__(self):
        object.__setattr__(self, "subset", frozenset(int(a) for a in self.subset))
        object.__setattr__(self, "chosen", int(self.chosen))

    def structure(self, m: int) -> StructureId:
        return StructureId.choice(self.subset)

    def validate(self, m: int) -> None:
        _check_indices(self.subset, m, "choice order")
        if not 1 <= len(self.subset) <= m:
            raise InvariantError("choice order needs a non-empty subset")
        if self.chosen not in self.subset:
            raise InvariantError(f"chosen alternative {self.chosen} not in subset")


PartialOrder = Union[TopL, LWay, ChoiceL]


def validate_linear_order(ranking: Iterable[int], m: int) -> tuple:
    r = tuple(int(a) for a in ranking)
    _check_indices(r, m, "linear order")
    if len(r) != m:
        raise InvariantError(f"linear order must rank all {m} alternatives")
    return r


# ---------------------------------------------------------------------------
# parameters


def _check_simplex(x: np.ndarray, what: str, open_interval: bool = True) -> None:
    if not np.all(np.isfinite(x)):
        raise InvariantError(f"{what} has non-finite entries")
    if open_interval and (np.any(x <= 0) or np.any(x >= 1)):
        raise InvariantError(f"{what} entries must lie in (0, 1)")
    if abs(x.sum() - 1.0) > SUM_TOL:
        raise SumError(float(x.sum()))


@dataclass(frozen=True)
class StructureDistribution:
    """Probabilities over a set of non-overlapping structures (``phi``)."""

    m: int
    entries: Mapping = field(default_factory=dict)

    def __post_init__(self):
        entries = {s: float(p) for s, p in sorted(self.entries.items(), key=lambda kv: kv[0].sort_key())}
        object.__setattr__(self, "entries", entries)
        validate_structure_set(entries, self.m).raise_if_invalid()

    @property
    def u(self) -> int:
        return len(self.entries)

    def __getitem__(self, s: StructureId) -> float:
        return self.entries[s]

    def __contains__(self, s: object) -> bool:
        return s in self.entries

    def __iter__(self):
        return iter(self.entries)

    def items(self):
        return self.entries.items()

    def to_json(self) -> dict:
        return {s.key(): p for s, p in self.entries.items()}

    @classmethod
    def from_json(cls, obj: Mapping, m: int) -> "StructureDistribution":
        return cls(m, {StructureId.from_key(k, m): float(v) for k, v in obj.items()})


@dataclass
class ValidationResult:
    errors: list

    @property
    def valid(self) -> bool:
        return not self.errors

    def raise_if_invalid(self) -> None:
        if self.errors:
            raise self.errors[0]


def validate_structure_set(phi, m: int) -> ValidationResult:
    """Check a structure distribution, collecting every violated rule.

    Rules: every structure is well formed for ``m``, every probability is
    strictly positive, probabilities sum to one within ``1e-9``, and the set
    contains neither ``(top-(m-1), A)`` together with ``(m-way, A)`` nor
    ``(2-way, S)`` together with ``(choice-2, S)``.
    """
    entries = phi.entries if isinstance(phi, StructureDistribution) else phi
    errors: list = []
    if m < 2:
        errors.append(DimensionError(f"need m >= 2, got {m}"))
        return ValidationResult(errors)
    for s, p in entries.items():
        try:
            s.validate(m)
        except MixPLError as exc:
            errors.append(exc)
        if not p > 0:
            errors.append(NonPositiveError(s, p))
    total = math.fsum(entries.values())
    if abs(total - 1.0) > SUM_TOL:
        errors.append(SumError(total))

    full = frozenset(range(1, m + 1))
    top_last = StructureId("top", m - 1, full)
    way_all = StructureId("way", m, full)
    if top_last in entries and way_all in entries:
        errors.append(OverlapError(top_last, way_all))
    for s in entries:
        if s.kind == "way" and s.l == 2:
            twin = StructureId("choice", 2, s.subset)
            if twin in entries:
                errors.append(OverlapError(s, twin))
    return ValidationResult(errors)


@dataclass(frozen=True)
class PLParams:
    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        if theta.ndim != 1 or theta.size < 2:
            raise DimensionError("theta must be a vector over at least 2 alternatives")
        _check_simplex(theta, "theta")

    @property
    def m(self) -> int:
        return self.theta.size


@dataclass(frozen=True)
class MixtureParams:
    """Mixing weights ``alpha`` over ``k`` PL components, plus optional ``phi``."""

    alpha: np.ndarray
    components: tuple
    phi: StructureDistribution | None = None

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float)
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        comps = tuple(c if isinstance(c, PLParams) else PLParams(c) for c in self.components)
        object.__setattr__(self, "components", comps)
        if alpha.ndim != 1 or alpha.size < 1 or alpha.size != len(comps):
            raise DimensionError("alpha must have one entry per component")
        if np.any(alpha <= 0):
            raise InvariantError("alpha entries must be positive")
        _check_simplex(alpha, "alpha", open_interval=False)
        if len({c.m for c in comps}) != 1:
            raise DimensionError("components must share the same alternatives")
        if self.phi is not None and self.phi.m != self.m:
            raise DimensionError("phi is defined over a different number of alternatives")

    @property
    def k(self) -> int:
        return self.alpha.size

    @property
    def m(self) -> int:
        return self.components[0].m

    @property
    def theta_matrix(self) -> np.ndarray:
        """Components stacked as a ``(k, m)`` array."""
        return np.stack([c.theta for c in self.components])

    def with_phi(self, phi: StructureDistribution | None) -> "MixtureParams":
        return MixtureParams(self.alpha, self.components, phi)

    def to_json(self) -> dict:
        out = {
            "m": self.m,
            "k": self.k,
            "alpha": [float(a) for a in self.alpha],
            "components": [[float(x) for x in c.theta] for c in self.components],
        }
        if self.phi is not None:
            out["phi"] = self.phi.to_json()
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "MixtureParams":
        try:
            m = int(obj["m"])
            comps = [np.asarray(c, dtype=float) for c in obj["components"]]
            alpha = obj["alpha"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed parameter document: {exc}") from exc
        if "k" in obj and int(obj["k"]) != len(comps):
            raise DimensionError("k does not match the number of components")
        if any(c.size != m for c in comps):
            raise DimensionError("component length does not match m")
        phi = StructureDistribution.from_json(obj["phi"], m) if obj.get("phi") else None
        return cls(alpha, tuple(comps), phi)


# ---------------------------------------------------------------------------
# profiles


@dataclass(frozen=True)
class Profile:
    m: int
    orders: tuple = ()

    def __post_init__(self):
        if self.m < 2:
            raise DimensionError(f"need m >= 2, got {self.m}")
        object.__setattr__(self, "orders", tuple(self.orders))

    def validate(self) -> None:
        for o in self.orders:
            o.validate(self.m)

    def __len__(self) -> int:
        return len(self.orders)

    def __iter__(self) -> Iterator:
        return iter(self.orders)


def order_to_json(o, m: int) -> dict:
    if isinstance(o, TopL):
        return {"kind": "top", "m": m, "ranked": list(o.ranked)}
    if isinstance(o, LWay):
        return {"kind": "way", "m": m, "ranked": list(o.ranked)}
    if isinstance(o, ChoiceL):
        return {"kind": "choice", "m": m, "subset": sorted(o.subset), "chosen": o.chosen}
    raise TypeError(f"not a partial order: {o!r}")


def order_from_json(obj: Mapping, m: int | None = None):
    """Build and validate one order from its JSON object form."""
    if not isinstance(obj, Mapping):
        raise ParseError("order must be a JSON object")
    kind = obj.get("kind")
    line_m = obj.get("m", m)
    if m is not None and line_m != m:
        raise InvariantError(f"order declares m={line_m} but profile has m={m}")
    if not isinstance(line_m, int):
        raise ParseError("order is missing an integer 'm'")
    try:
        if kind == "top":
            o = TopL(obj["ranked"])
        elif kind == "way":
            o = LWay(obj["ranked"])
        elif kind == "choice":
            subset = list(obj["subset"])
            if len(set(subset)) != len(subset):
                raise InvariantError("choice order: duplicate index in subset")
            o = ChoiceL(frozenset(subset), obj["chosen"])
        else:
            raise ParseError(f"unknown order kind {kind!r}")
    except KeyError as exc:
        raise ParseError(f"missing field {exc}") from exc
    except TypeError as exc:
        raise ParseError(str(exc)) from exc
    o.validate(line_m)
    return o


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"))


def write_profile(profile: Profile, stream: IO[bytes] | None = None) -> bytes:
    """Serialize to the JSON-Lines format; returns the bytes (and writes them
    to ``stream`` if given)."""
    lines = [_dumps({"m": profile.m})]
    lines.extend(_dumps(order_to_json(o, profile.m)) for o in profile.orders)
    data = ("\n".join(lines) + "\n").encode("utf-8")
    if stream is not None:
        stream.write(data)
    return data


def iter_profile(source: IO[bytes] | bytes) -> tuple[int, Iterator]:
    """Read the header eagerly and return ``(m, lazy order iterator)``."""
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    lines = (raw.decode("utf-8").rstrip("\r\n") for raw in source)
    numbered = ((i, ln) for i, ln in enumerate(lines, start=1) if ln.strip())
    try:
        lineno, header_line = next(numbered)
    except StopIteration:
        raise ParseError("empty profile: missing header line", 1) from None
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", lineno) from None
    if not isinstance(header, dict) or set(header) != {"m"} or not isinstance(header["m"], int):
        raise ParseError('header must be {"m": <int>}', lineno)
    m = header["m"]
    if m < 2:
        raise ParseError(f"need m >= 2, got {m}", lineno)

    def orders():
        for lineno, ln in numbered:
            try:
                obj = json.loads(ln)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", lineno) from None
            try:
                yield order_from_json(obj, m)
            except ParseError as exc:
                raise ParseError(str(exc), lineno) from None
            except InvariantError as exc:
                raise InvariantError(f"line {lineno}: {exc}") from None

    return m, orders()


def read_profile(source: IO[bytes] | bytes) -> Profile:
    m, orders = iter_profile(source)
    return Profile(m, tuple(orders))
