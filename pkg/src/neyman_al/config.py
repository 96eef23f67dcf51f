"""JSON experiment documents -> ExperimentConfig."""
from __future__ import annotations

import json
import re
from dataclasses import asdict

from .models import LogisticHyper
from .simulation import ExperimentConfig, FeatureModel, ModelSpec, PopulationSpec

SCHEMA_VERSION = 1
SWEEP_AXES = ("n_init", "noise_sigma", "gamma", "strategy")
DEFAULT_MAX_POINTS = 256


class ConfigError(ValueError):
    """Invalid configuration document; ``line`` points into the source text."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def _line_of(text, key):
    if text is None:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def loads(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, exc.lineno) from None
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a JSON object", 1)
    return doc


def load(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    doc = loads(text)
    return from_dict(doc, text), doc, text


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _default_means(K, d, separation):
    # class 0 at the origin; binary: class 1 on the diagonal at distance
    # `separation`; multiclass: class k on axis (k-1) mod d
    means = [[0.0] * d for _ in range(K)]
    if K == 2:
        means[1] = [separation / d**0.5] * d
    else:
        for k in range(1, K):
            means[k][(k - 1) % d] = separation
    return means


def from_dict(doc, text=None) -> ExperimentConfig:
    """Validate a config document; every failure is a ConfigError."""
    try:
        return _build(doc, text)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError, AttributeError) as exc:
        raise ConfigError(f"invalid value: {exc}") from None


def _build(doc, text):
    def fail(msg, key):
        raise ConfigError(msg, _line_of(text, key))

    known = {"schema_version", "population", "strategies", "model", "n_init", "batch_sizes",
             "batch_size", "rounds", "positive_set", "replications", "seed", "nsrs",
             "histogram_bins", "matched_cost", "sweep", "description"}
    for key in doc:
        if key not in known:
            fail(f"unknown key {key!r}", key)
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        fail(f"unsupported schema_version {version}", "schema_version")

    pop = doc.get("population")
    if not isinstance(pop, dict):
        fail("'population' object is required", "population")
    try:
        N = int(pop["N"])
        rates = [float(r) for r in pop["class_rates"]]
    except (KeyError, TypeError, ValueError):
        fail("population needs integer N and a class_rates list", "population")
    K = int(pop.get("K", len(rates)))
    fm = pop.get("feature_model", {})
    d = int(fm.get("d", 2))
    means = fm.get("means") or _default_means(K, d, float(fm.get("separation", 1.75)))
    if len(means) != K or any(len(m) != len(means[0]) for m in means):
        fail("feature_model.means needs K rows of equal dimension", "feature_model")
    population = PopulationSpec(
        N=N, K=K, class_rates=tuple(rates),
        feature_model=FeatureModel(tuple(tuple(float(x) for x in m) for m in means),
                                   float(fm.get("sigma", 1.0))),
        seed=int(pop.get("seed", 0)),
    )

    m = doc.get("model", {"type": "oracle"})
    kind = m.get("type", "oracle")
    if kind == "oracle":
        model = ModelSpec("oracle", float(m.get("noise_sigma", 0.0)), float(m.get("gamma", 1.0)))
        if model.noise_sigma < 0 or model.gamma <= 0:
            fail("oracle needs noise_sigma >= 0 and gamma > 0", "model")
    elif kind == "logistic":
        fields = LogisticHyper.__dataclass_fields__
        hyper = LogisticHyper(**{k: type(getattr(LogisticHyper(), k))(v) for k, v in m.items()
                                 if k in fields})
        model = ModelSpec("logistic", hyper=hyper)
    else:
        fail(f"model.type must be 'oracle' or 'logistic', got {kind!r}", "model")

    if "batch_sizes" in doc:
        batches = tuple(int(b) for b in doc["batch_sizes"])
    else:
        batches = (int(doc.get("batch_size", 2000)),) * int(doc.get("rounds", 4))
    nsrs = doc.get("nsrs", {})
    strategies = tuple(str(x).upper() for x in _as_list(doc.get("strategies", ["NSRS", "SRS", "UES"])))
    n_init = tuple(int(x) for x in _as_list(doc.get("n_init", 1000)))
    positive_set = tuple(int(x) for x in _as_list(doc.get("positive_set", [1])))
    replications = int(doc.get("replications", 2000))
    if any(x not in ("NSRS", "SRS", "UES") for x in strategies) or not strategies:
        fail(f"strategies must be drawn from NSRS, SRS, UES; got {list(strategies)}", "strategies")
    if not batches or min(batches) < 1:
        fail("batch sizes must be positive", "batch_sizes" if "batch_sizes" in doc else "batch_size")
    if any(n0 < 0 or n0 + sum(batches) > N for n0 in n_init):
        fail("n_init + sum(batch_sizes) must not exceed N", "n_init")
    if replications < 1:
        fail("replications must be >= 1", "replications")
    if not positive_set or len(set(positive_set)) >= K or min(positive_set) < 0 or max(positive_set) >= K:
        fail("positive_set must be a nonempty proper subset of the class indices", "positive_set")
    try:
        return ExperimentConfig(
            population=population,
            strategies=strategies,
            model=model,
            n_init=n_init,
            batch_sizes=batches,
            positive_set=positive_set,
            replications=replications,
            seed=int(doc.get("seed", 0)),
            depth=int(nsrs.get("depth", 5)),
            n_threshold=int(nsrs.get("n_threshold", 2)),
            max_candidates=int(nsrs.get("max_candidates", 256)),
            guardrail=nsrs.get("guardrail"),
            histogram_bins=int(doc.get("histogram_bins", 10)),
            matched_cost=bool(doc.get("matched_cost", True)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def sweep_axes(doc, text=None):
    """Declared sweep axes and the grid cap."""
    sweep = doc.get("sweep") or {}
    axes = sweep.get("axes", {})
    for name, values in axes.items():
        if name not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {name!r}", _line_of(text, name))
        if not isinstance(values, list):
            raise ConfigError(f"sweep axis {name!r} needs a list of values", _line_of(text, name))
    # an empty axis contributes no dimension
    return {k: list(v) for k, v in axes.items() if v}, int(sweep.get("max_points", DEFAULT_MAX_POINTS))


def apply_point(doc, point):
    """Copy of ``doc`` with one grid point's axis values substituted."""
    out = json.loads(json.dumps(doc))
    out.pop("sweep", None)
    for axis, value in point.items():
        if axis == "n_init":
            out["n_init"] = value
        elif axis == "strategy":
            out["strategies"] = _as_list(value)
        else:
            model = out.setdefault("model", {"type": "oracle"})
            model[axis] = value
    return out


def config_to_dict(config: ExperimentConfig):
    d = asdict(config)
    d["schema_version"] = SCHEMA_VERSION
    return d
