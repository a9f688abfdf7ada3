"""Python companion to the shardline C++ core.

Exposes the pure operations (scoring, normalization, validation, routing,
cache keys, replay classification) with dicts in place of the JSON strings
the extension speaks natively.
"""

import json

from . import _core

__version__ = _core.__version__

#: The nine explained factors, in canonical order.
FACTOR_NAMES = list(_core.factor_names)


def sigmoid(x):
    return _core.sigmoid(x)


def classify(error_rate_pct, avg_latency_ms):
    """PASS/PARTIAL/FAIL verdict; both thresholds are inclusive."""
    return _core.classify(error_rate_pct, avg_latency_ms)


def percentile(values, pct):
    """Nearest-rank percentile, matching the load generator's reports."""
    return _core.percentile_nearest_rank(list(values), pct)


def new_correlation_id():
    return _core.new_correlation_id()


def canonical_json(obj):
    """Key-sorted, whitespace-free JSON text for a dict or a JSON string."""
    text = obj if isinstance(obj, str) else json.dumps(obj)
    return _core.canonical_json(text)


def cache_key(user_id, what_if):
    """What-if cache key; equivalent inputs map to the same key."""
    text = what_if if isinstance(what_if, str) else json.dumps(what_if)
    return _core.cache_key(user_id, text)


def hash_password(password):
    return _core.hash_password(password)


def verify_password(password, stored):
    return _core.verify_password(password, stored)


def normalize(profile, activities=()):
    """Profile dict + activity dicts -> {factor: value in [0, 1]}."""
    return json.loads(
        _core.normalize(json.dumps(profile), json.dumps(list(activities)))
    )


def score(features, model=None):
    """Score a {factor: value} dict; returns the prediction record as a dict."""
    model_json = "" if model is None else json.dumps(model)
    return json.loads(_core.score(json.dumps(features), model_json))


def predict(profile, activities=(), model=None):
    """normalize + score in one step."""
    return score(normalize(profile, activities), model)


def validate_profile(candidate):
    """{"ok": bool, "errors": [{"field", "allowed"}...], "record"?: dict}"""
    return json.loads(_core.validate_profile(json.dumps(candidate)))


def route_user(user_id, shards=2, capacity=5000):
    """Owning shard index for a user id under a uniform range map."""
    return _core.route_user(user_id, shards, capacity)


def replay_metrics(path):
    """Re-classify a captured metrics CSV (name,error_rate,avg_latency)."""
    return json.loads(_core.replay_metrics(str(path)))
