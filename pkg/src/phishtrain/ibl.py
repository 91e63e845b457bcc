"""Instance-based learning memory model.

Implements activation with power-law decay and partial matching, retrieval
probabilities, blended values, and the two choice rules (argmax / softmax).
A :class:`MemoryStore` owns the instances, the current time step, the model
parameters, and an explicit RNG stream; it is cheaply snapshottable so that
selection policies can run what-if evaluations without touching the learner's
traced state.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

PHISHING = "phishing"
HAM = "ham"

# Default option set for the email task; the model itself is generic over any
# finite option collection.
EMAIL_OPTIONS = (PHISHING, HAM)


class ChoiceMode(str, Enum):
    ARGMAX = "argmax"
    SOFTMAX = "softmax"


class IBLError(Exception):
    """Base error for the memory model."""


class ShapeMismatch(IBLError):
    pass


class NonCausalProbe(IBLError):
    """Raised when a probe time does not strictly follow all occurrences."""


class EmptyMatchingSet(IBLError):
    pass


@dataclass(frozen=True)
class IBLParams:
    """Model parameters. Defaults follow the standard IBL convention:
    (d, mu, omega, sigma) = (0.5, 1, 1, 0.25), tau = sigma * sqrt(2).
    """

    d: float = 0.5
    mu: float = 1.0
    sigma: float = 0.25
    tau: Optional[float] = None  # None -> sigma * sqrt(2)
    beta: float = 0.25
    default_utility: float = 1.0
    weights: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if self.d <= 0:
            raise ValueError(f"decay d must be > 0, got {self.d}")
        if self.mu < 0:
            raise ValueError(f"mismatch penalty mu must be >= 0, got {self.mu}")
        if self.sigma < 0:
            raise ValueError(f"noise sigma must be >= 0, got {self.sigma}")
        if self.tau is not None and self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if any(w < 0 for w in self.weights):
            raise ValueError("attribute weights must be non-negative")

    @property
    def effective_tau(self) -> float:
        if self.tau is not None:
            return self.tau
        if self.sigma == 0:
            raise ValueError(
                "tau defaults to sigma * sqrt(2); with sigma = 0 it must be set explicitly"
            )
        return self.sigma * math.sqrt(2)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "mu": self.mu,
            "sigma": self.sigma,
            "tau": self.tau,
            "beta": self.beta,
            "default_utility": self.default_utility,
            "weights": list(self.weights),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "IBLParams":
        defaults = cls()
        return cls(
            d=obj.get("d", defaults.d),
            mu=obj.get("mu", defaults.mu),
            sigma=obj.get("sigma", defaults.sigma),
            tau=obj.get("tau"),
            beta=obj.get("beta", defaults.beta),
            default_utility=obj.get("default_utility", defaults.default_utility),
            weights=tuple(obj.get("weights", defaults.weights)),
        )


@dataclass
class Instance:
    """One memory element: what was chosen, in what context, what it paid.

    ``attributes`` is a tuple of hashable attribute values (for the email task
    a 1-tuple holding the email id). ``attributes = None`` marks a
    prepopulated instance that matches every probe perfectly.
    """

    option: str
    attributes: Optional[tuple]
    utility: float
    occurrences: list[int] = field(default_factory=list)
    prepopulated: bool = False

    def __post_init__(self):
        if self.prepopulated:
            if not self.occurrences:
                self.occurrences = [0]
        elif not self.occurrences:
            raise ValueError("non-prepopulated instance needs >= 1 occurrence")
        if any(b <= a for a, b in zip(self.occurrences, self.occurrences[1:])):
            raise ValueError("occurrences must be strictly increasing")

    def identity(self) -> tuple:
        return (self.option, self.attributes, self.utility)


SimilarityFn = Callable[[object, object], float]


def exact_match_similarity(a, b) -> float:
    """Fallback attribute similarity: 1 for identical values, else 0."""
    return 1.0 if a == b else 0.0


def partial_match_sum(
    inst: Instance,
    probe: Optional[tuple],
    weights: Sequence[float],
    similarity: SimilarityFn,
) -> float:
    """Sum_j w_j * (S_ij - 1); zero for prepopulated (perfect-match) instances."""
    if inst.attributes is None or probe is None:
        return 0.0
    if len(inst.attributes) != len(probe):
        raise ShapeMismatch(
            f"probe has {len(probe)} attributes, instance has {len(inst.attributes)}"
        )
    if len(weights) != len(probe):
        raise ShapeMismatch(
            f"{len(weights)} weights for {len(probe)} attributes"
        )
    total = 0.0
    for w, a, b in zip(weights, probe, inst.attributes):
        s = similarity(a, b)
        if not 0.0 <= s <= 1.0:
            raise IBLError(f"similarity {s!r} outside [0, 1]")
        total += w * (s - 1.0)
    return total


def activation(
    inst: Instance,
    t: int,
    probe: Optional[tuple],
    params: IBLParams,
    noise_draw: float = 0.0,
    similarity: SimilarityFn = exact_match_similarity,
) -> float:
    """A_i(t) = ln(sum (t - t')^-d) + mu * sum_j w_j (S_ij - 1) + sigma * xi."""
    occ = inst.occurrences
    if t <= max(occ):
        raise NonCausalProbe(f"t={t} does not follow occurrences {occ}")
    base = math.log(sum((t - tp) ** (-params.d) for tp in occ))
    mismatch = params.mu * partial_match_sum(inst, probe, params.weights, similarity)
    return base + mismatch + params.sigma * noise_draw


def retrieval_probabilities(
    matching: Sequence[Instance],
    t: int,
    probe: Optional[tuple],
    params: IBLParams,
    noise_draws: Optional[Sequence[float]] = None,
    similarity: SimilarityFn = exact_match_similarity,
) -> np.ndarray:
    """Softmax over activations at temperature tau, max-shifted for stability."""
    if len(matching) == 0:
        raise EmptyMatchingSet("no instances for option")
    if noise_draws is None:
        noise_draws = [0.0] * len(matching)
    acts = np.array(
        [
            activation(inst, t, probe, params, xi, similarity)
            for inst, xi in zip(matching, noise_draws)
        ]
    )
    return stable_softmax(acts / params.effective_tau)


def stable_softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max())
    return e / e.sum()


class MemoryStore:
    """The IBL memory: instances grouped by option, current time t, params,
    and a seeded RNG stream. Single-owner mutable value; use :meth:`snapshot`
    for what-if copies.
    """

    def __init__(
        self,
        options: Sequence[str] = EMAIL_OPTIONS,
        params: IBLParams = IBLParams(),
        seed: int = 0,
        similarity: SimilarityFn = exact_match_similarity,
        prepopulate: bool = True,
    ):
        if not options:
            raise ValueError("option set must be non-empty")
        self.options = tuple(options)
        self.params = params
        self.seed = int(seed)
        self.rng = np.random.default_rng(self.seed)
        self.similarity = similarity
        self.t = 0
        self._by_option: dict[str, list[Instance]] = {k: [] for k in self.options}
        if prepopulate:
            for k in self.options:
                self._by_option[k].append(
                    Instance(
                        option=k,
                        attributes=None,
                        utility=params.default_utility,
                        occurrences=[0],
                        prepopulated=True,
                    )
                )

    # -- introspection ---------------------------------------------------

    @property
    def instances(self) -> list[Instance]:
        return [inst for k in self.options for inst in self._by_option[k]]

    def matching(self, option: str) -> list[Instance]:
        if option not in self._by_option:
            raise KeyError(f"unknown option {option!r}")
        return list(self._by_option[option])

    def snapshot(self) -> "MemoryStore":
        """Deep copy sharing nothing mutable; RNG state is copied too."""
        return copy.deepcopy(self)

    # -- core quantities ---------------------------------------------------

    def blended_value(
        self,
        option: str,
        probe: Optional[tuple],
        t: Optional[int] = None,
        with_noise: bool = False,
    ) -> float:
        """V_k(t) = sum_i P_i(t) u_i over the option's matching instances."""
        t = self.t + 1 if t is None else t
        matching = self._by_option[option]
        if not matching:
            raise EmptyMatchingSet(f"option {option!r} has no instances")
        p = self.params
        acts = self._activations(matching, t, probe)
        if with_noise and p.sigma > 0:
            acts = acts + p.sigma * self.rng.standard_normal(len(matching))
        probs = stable_softmax(acts / p.effective_tau)
        utilities = np.array([inst.utility for inst in matching])
        return float(probs @ utilities)

    def _activations(
        self, matching: Sequence[Instance], t: int, probe: Optional[tuple]
    ) -> np.ndarray:
        """Noise-free activations, inlined for the simulation hot path.

        Equivalent to calling :func:`activation` with noise_draw = 0 on every
        instance (property-tested as such).
        """
        p = self.params
        sim = self.similarity
        single_attr = probe is not None and len(probe) == 1
        w0 = p.weights[0] if p.weights else 1.0
        acts = np.empty(len(matching))
        for i, inst in enumerate(matching):
            occ = inst.occurrences
            if t <= occ[-1]:
                raise NonCausalProbe(f"t={t} does not follow occurrences {occ}")
            if len(occ) == 1:
                base = -p.d * math.log(t - occ[0])
            else:
                base = math.log(math.fsum((t - tp) ** (-p.d) for tp in occ))
            if inst.attributes is None or probe is None:
                pm = 0.0
            elif single_attr and len(inst.attributes) == 1:
                pm = p.mu * w0 * (sim(probe[0], inst.attributes[0]) - 1.0)
            else:
                pm = p.mu * partial_match_sum(inst, probe, p.weights, sim)
            acts[i] = base + pm
        return acts

    def choose(
        self,
        probe: Optional[tuple],
        options: Optional[Sequence[str]] = None,
        mode: ChoiceMode = ChoiceMode.SOFTMAX,
        t: Optional[int] = None,
        with_noise: bool = True,
    ) -> tuple[str, dict[str, float]]:
        """Pick an option from blended values.

        ARGMAX breaks ties toward the lowest option ordinal (position in the
        store's option tuple). SOFTMAX draws from the store's RNG stream.
        """
        opts = tuple(options) if options is not None else self.options
        if not opts:
            raise ValueError("empty option list")
        values = np.array(
            [self.blended_value(k, probe, t, with_noise=with_noise) for k in opts]
        )
        if mode == ChoiceMode.ARGMAX:
            idx = int(np.argmax(values))  # np.argmax returns first max: lowest ordinal
            dist = {k: (1.0 if i == idx else 0.0) for i, k in enumerate(opts)}
            return opts[idx], dist
        probs = stable_softmax(values / self.params.beta)
        idx = int(self.rng.choice(len(opts), p=probs))
        return opts[idx], {k: float(p) for k, p in zip(opts, probs)}

    # -- learning ---------------------------------------------------------

    def record_outcome(
        self,
        option: str,
        attributes: Optional[tuple],
        utility: float,
        t: Optional[int] = None,
    ) -> None:
        """Store an observed outcome at time t.

        Identical (option, attributes, utility) triples consolidate into one
        instance with an extra occurrence time.
        """
        if not math.isfinite(utility):
            raise ValueError("utility must be finite")
        t = self.t + 1 if t is None else t
        if t not in (self.t, self.t + 1):
            raise ValueError(f"t={t} must be memory.t or memory.t + 1 (t={self.t})")
        bucket = self._by_option[option]
        for inst in bucket:
            if not inst.prepopulated and inst.identity() == (option, attributes, utility):
                if t <= inst.occurrences[-1]:
                    raise ValueError(
                        f"t={t} precedes existing occurrence {inst.occurrences[-1]}"
                    )
                inst.occurrences.append(t)
                break
        else:
            bucket.append(
                Instance(option=option, attributes=attributes, utility=utility,
                         occurrences=[t])
            )
        self.t = max(self.t, t)

    def advance_time(self, t: Optional[int] = None) -> None:
        """Move the clock without storing anything (no-feedback trials)."""
        self.t = self.t + 1 if t is None else max(self.t, t)

    def trace(
        self, trials: Sequence[tuple[Optional[tuple], str, Optional[float]]]
    ) -> "MemoryStore":
        """Replay (probe, chosen option, utility-or-None) trials in order.

        Trials without a utility advance t but leave memory untouched.
        """
        for probe, option, utility in trials:
            if utility is None:
                self.advance_time()
            else:
                self.record_outcome(option, probe, utility)
        return self

    # -- serialization ------------------------------------------------------

    def to_json(self) -> str:
        records = []
        for inst in self.instances:
            rec: dict = {
                "option": inst.option,
                "utility": inst.utility,
                "occurrences": inst.occurrences,
                "prepopulated": inst.prepopulated,
            }
            if inst.attributes is None:
                rec["attributes"] = None
            elif len(inst.attributes) == 1 and isinstance(inst.attributes[0], str):
                rec["email_id"] = inst.attributes[0]
            else:
                rec["attributes"] = list(inst.attributes)
            records.append(rec)
        return json.dumps(
            {
                "params": self.params.to_dict(),
                "t": self.t,
                "seed": self.seed,
                "options": list(self.options),
                "instances": records,
            }
        )

    @classmethod
    def from_json(
        cls, text: str, similarity: SimilarityFn = exact_match_similarity
    ) -> "MemoryStore":
        obj = json.loads(text)
        store = cls(
            options=tuple(obj["options"]),
            params=IBLParams.from_dict(obj["params"]),
            seed=obj["seed"],
            similarity=similarity,
            prepopulate=False,
        )
        for rec in obj["instances"]:
            if "email_id" in rec:
                attrs: Optional[tuple] = (rec["email_id"],)
            elif rec["attributes"] is None:
                attrs = None
            else:
                attrs = tuple(
                    tuple(a) if isinstance(a, list) else a for a in rec["attributes"]
                )
            store._by_option[rec["option"]].append(
                Instance(
                    option=rec["option"],
                    attributes=attrs,
                    utility=rec["utility"],
                    occurrences=list(rec["occurrences"]),
                    prepopulated=rec["prepopulated"],
                )
            )
        store.t = obj["t"]
        return store
