"""Pipeline configuration: flat ``key = value`` text with ``[section]`` headers.

Every knob ships with a default; unknown keys and malformed values are
rejected with the offending key and line number.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _parse_bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _parse_int_list(raw: str) -> list[int]:
    return [int(tok) for tok in raw.replace(",", " ").split()]


_PARSERS = {
    "int": int,
    "float": float,
    "bool": _parse_bool,
    "str": str,
    "int_list": _parse_int_list,
}


@dataclass
class PipelineConfig:
    # [data]
    dataset: str = "synth"
    yelp_reviews: str = ""
    yelp_businesses: str = ""
    yelp_users: str = ""
    tripadvisor_reviews: str = ""
    entity_vocabulary: str = ""
    rating_min: float = 1.0
    rating_max: float = 5.0
    min_count: int = 5
    single_pass_filter: bool = False
    # [synth]
    synth_clusters: int = 4
    synth_users_per_cluster: int = 50
    synth_items_per_cluster: int = 30
    synth_cross_rate: float = 0.05
    synth_noise: float = 0.5
    synth_interactions_per_user: int = 12
    # [split]
    split_folds: int = 5
    split_fold: int = 0
    # [walk]
    walks_per_node: int = 10
    walk_length: int = 100
    coeff_user_user: float = 1.0 / 6.0
    coeff_user_entity: float = 1.0 / 6.0
    coeff_user_item: float = 1.0 / 6.0
    coeff_entity_item: float = 1.0 / 6.0
    coeff_entity_entity: float = 1.0 / 6.0
    coeff_item_item: float = 1.0 / 6.0
    # [embedding]
    embedding_dim: int = 128
    embedding_window: int = 2
    embedding_min_count: int = 1
    embedding_epochs: int = 100
    embedding_negatives: int = 5
    embedding_learning_rate: float = 0.025
    # [rating]
    rating_model: str = "biased_mf"
    rating_factors: int = 32
    rating_epochs: int = 50
    rating_learning_rate: float = 0.005
    rating_regularization: float = 0.02
    rating_damping: float = 10.0
    # [recommend]
    alpha: float = 0.5
    top_n: int = 10
    normalize_components: bool = True
    expected_set: str = "base"
    include_user_vertex: bool = True
    max_hull_vertices: int = 2000
    candidate_cap: int = 0
    # [hull]
    hull_tolerance: float = 1e-7
    boundary_eps: float = 1e-6
    depth_directions: int = 256
    # [eval]
    relevance_threshold: float = 4.0
    useful_threshold: float = 4.0
    serendipity_mode: str = "deviation"
    utility_threshold: float = 0.5
    iterations: list[int] = field(default_factory=lambda: [1, 5, 10, 20, 50])
    # [run]
    seed: int = 0


# (section, key in file) -> (attribute, type tag)
_REGISTRY: dict[tuple[str, str], tuple[str, str]] = {
    ("data", "dataset"): ("dataset", "str"),
    ("data", "yelp_reviews"): ("yelp_reviews", "str"),
    ("data", "yelp_businesses"): ("yelp_businesses", "str"),
    ("data", "yelp_users"): ("yelp_users", "str"),
    ("data", "tripadvisor_reviews"): ("tripadvisor_reviews", "str"),
    ("data", "entity_vocabulary"): ("entity_vocabulary", "str"),
    ("data", "rating_min"): ("rating_min", "float"),
    ("data", "rating_max"): ("rating_max", "float"),
    ("data", "min_count"): ("min_count", "int"),
    ("data", "single_pass_filter"): ("single_pass_filter", "bool"),
    ("synth", "clusters"): ("synth_clusters", "int"),
    ("synth", "users_per_cluster"): ("synth_users_per_cluster", "int"),
    ("synth", "items_per_cluster"): ("synth_items_per_cluster", "int"),
    ("synth", "cross_rate"): ("synth_cross_rate", "float"),
    ("synth", "noise"): ("synth_noise", "float"),
    ("synth", "interactions_per_user"): ("synth_interactions_per_user", "int"),
    ("split", "folds"): ("split_folds", "int"),
    ("split", "fold"): ("split_fold", "int"),
    ("walk", "walks_per_node"): ("walks_per_node", "int"),
    ("walk", "walk_length"): ("walk_length", "int"),
    ("walk", "coeff_user_user"): ("coeff_user_user", "float"),
    ("walk", "coeff_user_entity"): ("coeff_user_entity", "float"),
    ("walk", "coeff_user_item"): ("coeff_user_item", "float"),
    ("walk", "coeff_entity_item"): ("coeff_entity_item", "float"),
    ("walk", "coeff_entity_entity"): ("coeff_entity_entity", "float"),
    ("walk", "coeff_item_item"): ("coeff_item_item", "float"),
    ("embedding", "dim"): ("embedding_dim", "int"),
    ("embedding", "window"): ("embedding_window", "int"),
    ("embedding", "min_count"): ("embedding_min_count", "int"),
    ("embedding", "epochs"): ("embedding_epochs", "int"),
    ("embedding", "negatives"): ("embedding_negatives", "int"),
    ("embedding", "learning_rate"): ("embedding_learning_rate", "float"),
    ("rating", "model"): ("rating_model", "str"),
    ("rating", "factors"): ("rating_factors", "int"),
    ("rating", "epochs"): ("rating_epochs", "int"),
    ("rating", "learning_rate"): ("rating_learning_rate", "float"),
    ("rating", "regularization"): ("rating_regularization", "float"),
    ("rating", "damping"): ("rating_damping", "float"),
    ("recommend", "alpha"): ("alpha", "float"),
    ("recommend", "top_n"): ("top_n", "int"),
    ("recommend", "normalize_components"): ("normalize_components", "bool"),
    ("recommend", "expected_set"): ("expected_set", "str"),
    ("recommend", "include_user_vertex"): ("include_user_vertex", "bool"),
    ("recommend", "max_hull_vertices"): ("max_hull_vertices", "int"),
    ("recommend", "candidate_cap"): ("candidate_cap", "int"),
    ("hull", "tolerance"): ("hull_tolerance", "float"),
    ("hull", "boundary_eps"): ("boundary_eps", "float"),
    ("hull", "depth_directions"): ("depth_directions", "int"),
    ("eval", "relevance_threshold"): ("relevance_threshold", "float"),
    ("eval", "useful_threshold"): ("useful_threshold", "float"),
    ("eval", "serendipity_mode"): ("serendipity_mode", "str"),
    ("eval", "utility_threshold"): ("utility_threshold", "float"),
    ("eval", "iterations"): ("iterations", "int_list"),
    ("run", "seed"): ("seed", "int"),
}

_CHOICES = {
    "dataset": {"synth", "yelp", "tripadvisor"},
    "rating_model": {"biased_mf", "bias_only"},
    "expected_set": {"base", "base_with_entities"},
    "serendipity_mode": {"deviation", "literal"},
}


def _validate(cfg: PipelineConfig) -> PipelineConfig:
    for attr, allowed in _CHOICES.items():
        value = getattr(cfg, attr)
        if value not in allowed:
            raise ConfigError(
                f"value {value!r} not one of {sorted(allowed)}", key=attr
            )
    if cfg.rating_min >= cfg.rating_max:
        raise ConfigError("rating_min must be below rating_max", key="rating_min")
    if not 0.0 <= cfg.alpha <= 1.0:
        raise ConfigError("alpha must lie in [0, 1]", key="alpha")
    if cfg.seed < 0:
        raise ConfigError("seed must be nonnegative", key="seed")
    coeffs = [
        cfg.coeff_user_user,
        cfg.coeff_user_entity,
        cfg.coeff_user_item,
        cfg.coeff_entity_item,
        cfg.coeff_entity_entity,
        cfg.coeff_item_item,
    ]
    if any(c < 0 for c in coeffs):
        raise ConfigError("transition coefficients must be nonnegative", key="coeff_*")
    if abs(sum(coeffs) - 1.0) > 1e-6:
        raise ConfigError(
            f"transition coefficients must sum to 1, got {sum(coeffs)}", key="coeff_*"
        )
    positive_ints = (
        "min_count", "synth_clusters", "synth_users_per_cluster",
        "synth_items_per_cluster", "split_folds", "walks_per_node",
        "walk_length", "embedding_dim", "embedding_window",
        "embedding_min_count", "embedding_epochs", "embedding_negatives",
        "rating_factors", "rating_epochs", "top_n", "depth_directions",
    )
    for attr in positive_ints:
        if getattr(cfg, attr) < 1:
            raise ConfigError("must be a positive integer", key=attr)
    if not 0 <= cfg.split_fold < cfg.split_folds:
        raise ConfigError("fold must lie in [0, folds)", key="fold")
    return cfg


def default_config() -> PipelineConfig:
    return _validate(PipelineConfig())


def parse_config_text(text: str, source: str = "<config>") -> PipelineConfig:
    cfg = PipelineConfig()
    section = ""
    seen: set[tuple[str, str]] = set()
    for lineno, raw_line in enumerate(text.splitlines(), 1):
        line = raw_line.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: expected 'key = value'", line=lineno)
        key, _, raw_value = line.partition("=")
        key = key.strip().lower()
        raw_value = raw_value.split("#", 1)[0].strip()
        entry = _REGISTRY.get((section, key))
        if entry is None:
            raise ConfigError(f"{source}: unknown key", key=f"{section}.{key}", line=lineno)
        if (section, key) in seen:
            raise ConfigError(f"{source}: duplicate key", key=f"{section}.{key}", line=lineno)
        seen.add((section, key))
        attr, type_tag = entry
        try:
            setattr(cfg, attr, _PARSERS[type_tag](raw_value))
        except ValueError as exc:
            raise ConfigError(
                f"{source}: {exc}", key=f"{section}.{key}", line=lineno
            ) from exc
    return _validate(cfg)


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return default_config()
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))


def config_template() -> str:
    """The full default configuration as writable key = value text."""
    by_section: dict[str, list[str]] = {}
    defaults = PipelineConfig()
    for (section, key), (attr, type_tag) in _REGISTRY.items():
        value = getattr(defaults, attr)
        if type_tag == "bool":
            rendered = "true" if value else "false"
        elif type_tag == "int_list":
            rendered = " ".join(str(v) for v in value)
        else:
            rendered = str(value)
        by_section.setdefault(section, []).append(f"{key} = {rendered}")
    parts = []
    for section in sorted(by_section):
        parts.append(f"[{section}]")
        parts.extend(by_section[section])
        parts.append("")
    return "\n".join(parts)
