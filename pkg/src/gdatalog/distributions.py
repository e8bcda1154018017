"""Parameterised distributions and deterministic scalar functions.

Sampling algorithms (one uniform per draw unless noted):

* normal(mean, var): inverse CDF, ``mean + sqrt(var) * Phi^-1(u)``
* lognormal(mu, var): ``exp`` of the normal draw above, so the median is ``e**mu``
* exponential(rate): inverse CDF, ``-log(u) / rate``
* uniform(lo, hi): ``lo + (hi - lo) * u``
* bernoulli(p): ``1 if u < p else 0``
* poisson(rate): sequential CDF search from 0 with log-space masses
* discrete(values, weights): cumulative-weight search

Note that the second parameter of normal and lognormal is the variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Callable, Mapping, Sequence

from . import values as V
from .errors import (
    DomainError,
    OverflowToNonFinite,
    ParamOutOfDomain,
    ParamTypeMismatch,
    Unsupported,
)
from .rng import RngStream

_STD = NormalDist()
_SQRT2 = math.sqrt(2.0)

NUM = "number"
LIST = "list"


@dataclass(frozen=True)
class DistSpec:
    name: str
    params: tuple[tuple[str, str], ...]  # (name, kind) with kind NUM or LIST
    domains: tuple[str, ...]  # human-readable admissible set per parameter
    support: str  # value type of draws, or None when it follows the values list
    _check: Callable
    _sample: Callable
    _cdf: Callable
    _pdf: Callable | None = None

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(p for p, _ in self.params)

    @property
    def discrete(self) -> bool:
        return self._pdf is None

    def __repr__(self):
        return f"DistSpec({self.name})"


# -- parameter checks ----------------------------------------------------------


def _num(spec_name: str, pname: str, x) -> float:
    if V.type_of(x) not in V.NUMERIC:
        raise ParamTypeMismatch(f"{spec_name}: parameter {pname} must be numeric, got {x!r}")
    x = float(x)
    if not math.isfinite(x):
        raise ParamOutOfDomain(f"{spec_name}: parameter {pname} must be finite, got {x!r}")
    return x


def _require(cond: bool, spec: str, pname: str, domain: str, value) -> None:
    if not cond:
        raise ParamOutOfDomain(f"{spec}: parameter {pname}={value!r} outside admissible set {domain}")


def _check_normal(p):
    mean, var = _num("normal", "mean", p[0]), _num("normal", "var", p[1])
    _require(var > 0, "normal", "var", "(0, inf)", var)
    return (mean, var)


def _check_lognormal(p):
    mu, var = _num("lognormal", "mu", p[0]), _num("lognormal", "var", p[1])
    _require(var > 0, "lognormal", "var", "(0, inf)", var)
    return (mu, var)


def _check_exponential(p):
    rate = _num("exponential", "rate", p[0])
    _require(rate > 0, "exponential", "rate", "(0, inf)", rate)
    return (rate,)


def _check_uniform(p):
    lo, hi = _num("uniform", "lo", p[0]), _num("uniform", "hi", p[1])
    _require(lo < hi, "uniform", "hi", "(lo, inf)", hi)
    return (lo, hi)


def _check_bernoulli(p):
    q = _num("bernoulli", "p", p[0])
    _require(0.0 < q < 1.0, "bernoulli", "p", "(0, 1)", q)
    return (q,)


def _check_poisson(p):
    rate = _num("poisson", "rate", p[0])
    _require(rate > 0, "poisson", "rate", "(0, inf)", rate)
    return (rate,)


def _check_discrete(p):
    vals, weights = p
    if not isinstance(vals, (tuple, list)) or not isinstance(weights, (tuple, list)):
        raise ParamTypeMismatch("discrete: values and weights must be lists")
    if not vals:
        raise ParamOutOfDomain("discrete: values must be nonempty")
    if len(vals) != len(weights):
        raise ParamOutOfDomain(
            f"discrete: {len(vals)} values but {len(weights)} weights")
    types = {V.type_of(v) for v in vals}
    if len(types) > 1:
        if types <= V.NUMERIC:
            vals = [float(v) for v in vals]
        else:
            raise ParamTypeMismatch(f"discrete: values mix types {sorted(types)}")
    ws = [_num("discrete", "weights", w) for w in weights]
    for w in ws:
        _require(w > 0, "discrete", "weights", "(0, inf) summing to 1", w)
    total = math.fsum(ws)
    _require(abs(total - 1.0) <= 1e-9, "discrete", "weights", "sum within 1e-9 of 1", total)
    return (tuple(vals), tuple(ws))


# -- samplers -----------------------------------------------------------------


def _sample_normal(p, s: RngStream):
    return p[0] + math.sqrt(p[1]) * _STD.inv_cdf(s.uniform())


def _sample_lognormal(p, s: RngStream):
    return math.exp(p[0] + math.sqrt(p[1]) * _STD.inv_cdf(s.uniform()))


def _sample_exponential(p, s: RngStream):
    return -math.log(s.uniform()) / p[0]


def _sample_uniform(p, s: RngStream):
    lo, hi = p
    return lo + (hi - lo) * s.uniform()


def _sample_bernoulli(p, s: RngStream):
    return 1 if s.uniform() < p[0] else 0


def _poisson_logpmf(k: int, rate: float) -> float:
    return -rate + k * math.log(rate) - math.lgamma(k + 1)


def _sample_poisson(p, s: RngStream):
    rate = p[0]
    u = s.uniform()
    k, acc = 0, 0.0
    # the tail beyond rate + 40 sqrt(rate) + 40 carries < 1e-300 mass
    limit = int(rate + 40 * math.sqrt(rate) + 40)
    while k < limit:
        acc += math.exp(_poisson_logpmf(k, rate))
        if u <= acc:
            return k
        k += 1
    return k


def _sample_discrete(p, s: RngStream):
    vals, ws = p
    u = s.uniform()
    acc = 0.0
    for v, w in zip(vals, ws):
        acc += w
        if u <= acc:
            return v
    return vals[-1]


# -- cdf / pdf ----------------------------------------------------------------


def _normal_cdf(mean, var, x):
    return 0.5 * math.erfc(-(x - mean) / (math.sqrt(var) * _SQRT2))


def _cdf_normal(p, x):
    return _normal_cdf(p[0], p[1], x)


def _cdf_lognormal(p, x):
    if x <= 0:
        return 0.0
    return _normal_cdf(p[0], p[1], math.log(x))


def _cdf_exponential(p, x):
    return 0.0 if x <= 0 else -math.expm1(-p[0] * x)


def _cdf_uniform(p, x):
    lo, hi = p
    if x <= lo:
        return 0.0
    if x >= hi:
        return 1.0
    return (x - lo) / (hi - lo)


def _cdf_bernoulli(p, x):
    if x < 0:
        return 0.0
    return 1.0 - p[0] if x < 1 else 1.0


def _cdf_poisson(p, x):
    if x < 0:
        return 0.0
    kmax = math.floor(x)
    rate = p[0]
    limit = int(rate + 40 * math.sqrt(rate) + 40)
    if kmax >= limit:
        return 1.0
    return min(1.0, math.fsum(math.exp(_poisson_logpmf(k, rate)) for k in range(kmax + 1)))


def _cdf_discrete(p, x):
    vals, ws = p
    if not all(V.type_of(v) in V.NUMERIC for v in vals):
        raise Unsupported("discrete cdf needs numeric values")
    return min(1.0, math.fsum(w for v, w in zip(vals, ws) if v <= x))


def _pdf_normal(p, x):
    mean, var = p
    return math.exp(-((x - mean) ** 2) / (2 * var)) / math.sqrt(2 * math.pi * var)


def _pdf_lognormal(p, x):
    if x <= 0:
        return 0.0
    return _pdf_normal(p, math.log(x)) / x


def _pdf_exponential(p, x):
    return 0.0 if x < 0 else p[0] * math.exp(-p[0] * x)


def _pdf_uniform(p, x):
    lo, hi = p
    return 1.0 / (hi - lo) if lo <= x <= hi else 0.0


DISTRIBUTIONS: dict[str, DistSpec] = {
    d.name: d
    for d in (
        DistSpec("normal", (("mean", NUM), ("var", NUM)), ("R", "(0, inf)"), V.REAL,
                 _check_normal, _sample_normal, _cdf_normal, _pdf_normal),
        DistSpec("lognormal", (("mu", NUM), ("var", NUM)), ("R", "(0, inf)"), V.REAL,
                 _check_lognormal, _sample_lognormal, _cdf_lognormal, _pdf_lognormal),
        DistSpec("exponential", (("rate", NUM),), ("(0, inf)",), V.REAL,
                 _check_exponential, _sample_exponential, _cdf_exponential, _pdf_exponential),
        DistSpec("uniform", (("lo", NUM), ("hi", NUM)), ("R", "(lo, inf)"), V.REAL,
                 _check_uniform, _sample_uniform, _cdf_uniform, _pdf_uniform),
        DistSpec("bernoulli", (("p", NUM),), ("(0, 1)",), V.INTEGER,
                 _check_bernoulli, _sample_bernoulli, _cdf_bernoulli),
        DistSpec("poisson", (("rate", NUM),), ("(0, inf)",), V.INTEGER,
                 _check_poisson, _sample_poisson, _cdf_poisson),
        DistSpec("discrete", (("values", LIST), ("weights", LIST)),
                 ("nonempty list", "positive, summing to 1"), None,
                 _check_discrete, _sample_discrete, _cdf_discrete),
    )
}


def get_spec(spec: DistSpec | str) -> DistSpec:
    if isinstance(spec, DistSpec):
        return spec
    try:
        return DISTRIBUTIONS[spec]
    except KeyError:
        raise Unsupported(f"unknown distribution {spec!r}") from None


def _ordered(spec: DistSpec, params) -> list:
    if isinstance(params, Mapping):
        missing = [n for n in spec.param_names if n not in params]
        extra = [n for n in params if n not in spec.param_names]
        if missing or extra:
            raise ParamTypeMismatch(
                f"{spec.name} takes parameters {spec.param_names}, got {tuple(params)}")
        return [params[n] for n in spec.param_names]
    params = list(params)
    if len(params) != len(spec.params):
        raise ParamTypeMismatch(
            f"{spec.name} takes {len(spec.params)} parameters, got {len(params)}")
    return params


def validate_params(spec: DistSpec | str, params: Sequence | Mapping) -> tuple:
    """Check parameters and return them normalised (floats, tuples).

    Raises ParamOutOfDomain or ParamTypeMismatch.
    """
    spec = get_spec(spec)
    return spec._check(_ordered(spec, params))


def support_type(spec: DistSpec | str, params=None) -> str:
    spec = get_spec(spec)
    if spec.support is not None:
        return spec.support
    vals = _ordered(spec, params)[0]
    types = {V.type_of(v) for v in vals}
    return types.pop() if len(types) == 1 else V.REAL


def sample(spec: DistSpec | str, params: Sequence | Mapping, stream: RngStream):
    spec = get_spec(spec)
    p = spec._check(_ordered(spec, params))
    return sample_checked(spec, p, stream)


def sample_checked(spec: DistSpec, p: tuple, stream: RngStream):
    """Draw with already-validated parameters (hot path of the chase)."""
    try:
        x = spec._sample(p, stream)
    except OverflowError:
        raise OverflowToNonFinite(f"{spec.name} draw overflowed") from None
    if isinstance(x, float):
        if not math.isfinite(x):
            raise OverflowToNonFinite(f"{spec.name} draw is not finite")
        return x + 0.0
    return x


def cdf(spec: DistSpec | str, params: Sequence | Mapping, x: float) -> float:
    spec = get_spec(spec)
    p = spec._check(_ordered(spec, params))
    return spec._cdf(p, float(x))


def pdf(spec: DistSpec | str, params: Sequence | Mapping, x: float) -> float:
    spec = get_spec(spec)
    if spec._pdf is None:
        raise Unsupported(f"{spec.name} has no density")
    p = spec._check(_ordered(spec, params))
    return spec._pdf(p, float(x))


# -- deterministic functions --------------------------------------------------

FN_ALIASES = {"+": "+", "-": "-", "−": "-", "*": "*", "×": "*", "/": "/", "÷": "/",
              "ln": "ln", "exp": "exp", "neg": "neg"}
FN_ARITY = {"+": 2, "-": 2, "*": 2, "/": 2, "ln": 1, "exp": 1, "neg": 1}


def fn_result_type(fn: str, arg_types: Sequence[str]) -> str:
    if any(t not in V.NUMERIC for t in arg_types):
        raise ParamTypeMismatch(f"function {fn} needs numeric arguments, got {list(arg_types)}")
    if fn in ("/", "ln", "exp"):
        return V.REAL
    return V.INTEGER if all(t == V.INTEGER for t in arg_types) else V.REAL


def _finite(x: float, fn: str):
    if isinstance(x, float):
        if not math.isfinite(x):
            raise OverflowToNonFinite(f"{fn} produced a non-finite result")
        return x + 0.0
    if not V.INT_MIN <= x <= V.INT_MAX:
        raise OverflowToNonFinite(f"{fn} overflowed the 64-bit integer range")
    return x


def apply_fn(fn: str, args: Sequence):
    try:
        op = FN_ALIASES[fn]
    except KeyError:
        raise Unsupported(f"unknown function {fn!r}") from None
    if len(args) != FN_ARITY[op]:
        raise ParamTypeMismatch(f"{fn} takes {FN_ARITY[op]} arguments, got {len(args)}")
    for a in args:
        if V.type_of(a) not in V.NUMERIC:
            raise ParamTypeMismatch(f"{fn} needs numeric arguments, got {a!r}")
    if op == "+":
        r = args[0] + args[1]
    elif op == "-":
        r = args[0] - args[1]
    elif op == "*":
        r = args[0] * args[1]
    elif op == "/":
        if args[1] == 0:
            raise DomainError("division by zero")
        try:
            r = args[0] / args[1]
        except OverflowError:
            raise OverflowToNonFinite("/ produced a non-finite result") from None
    elif op == "ln":
        if args[0] <= 0:
            raise DomainError(f"ln of nonpositive value {args[0]!r}")
        r = math.log(args[0])
    elif op == "exp":
        try:
            r = math.exp(args[0])
        except OverflowError:
            raise OverflowToNonFinite("exp produced a non-finite result") from None
    else:
        r = -args[0]
    return _finite(r, op)
