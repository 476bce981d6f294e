"""Experiment configuration: a small YAML-subset parser and typed schema.

The parser covers exactly what the experiment files use: nested mappings by
two-space-style indentation, block sequences (`- item`), inline flow lists
(`[a, b]`), tuples (`(16,16,16,16)`) and scalars (int, float, True/False,
bare or quoted strings). `#` starts a comment outside quotes. Every parse or
validation error carries the offending line number. Full YAML compliance is
deliberately out of scope; `render_config` emits the canonical form and
`parse_config(render_config(c))` is the identity.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field

__all__ = [
    "ConfigError",
    "MetaConfig",
    "DataConfig",
    "ModelSpec",
    "ExperimentConfig",
    "parse_yaml_subset",
    "parse_config",
    "render_config",
    "expand_grid",
    "KNOWN_MODEL_TAGS",
]

KNOWN_MODEL_TAGS = ("external.ContextGNN", "MFBPR", "LightGCN", "ItemFilter")


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"{message} (line {line})" if line is not None else message)


# ----------------------------------------------------------------------
# YAML-subset parsing
# ----------------------------------------------------------------------

_INT_RE = re.compile(r"[+-]?\d+$")
_FLOAT_RE = re.compile(r"[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?$")


def _strip_comment(line, lineno):
    out = []
    quote = None
    for ch in line:
        if quote:
            out.append(ch)
            if ch == quote:
                quote = None
            continue
        if ch in ("'", '"'):
            quote = ch
            out.append(ch)
            continue
        if ch == "#":
            break
        out.append(ch)
    if quote:
        raise ConfigError("unterminated quote", lineno)
    return "".join(out).rstrip()


def _split_top(text, sep=","):
    """Split on `sep` at bracket depth zero."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


def _parse_scalar(token, lineno):
    token = token.strip()
    if not token:
        raise ConfigError("empty value", lineno)
    if token[0] in ("'", '"'):
        if len(token) < 2 or token[-1] != token[0]:
            raise ConfigError(f"malformed quoted string {token!r}", lineno)
        return token[1:-1]
    if token in ("True", "true"):
        return True
    if token in ("False", "false"):
        return False
    if token.startswith("(") or token.endswith(")"):
        if not (token.startswith("(") and token.endswith(")")):
            raise ConfigError(f"malformed tuple {token!r}", lineno)
        inner = token[1:-1].strip()
        if not inner:
            return ()
        return tuple(_parse_scalar(p, lineno) for p in _split_top(inner))
    if token.startswith("[") or token.endswith("]"):
        if not (token.startswith("[") and token.endswith("]")):
            raise ConfigError(f"malformed list {token!r}", lineno)
        inner = token[1:-1].strip()
        if not inner:
            return []
        return [_parse_scalar(p, lineno) for p in _split_top(inner)]
    if _INT_RE.fullmatch(token):
        return int(token)
    if _FLOAT_RE.fullmatch(token):
        return float(token)
    return token


@dataclass
class _Line:
    lineno: int
    indent: int
    content: str


def _significant_lines(text):
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = _strip_comment(raw, lineno)
        if not stripped.strip():
            continue
        indent = len(stripped) - len(stripped.lstrip(" "))
        if "\t" in stripped[:indent + 1]:
            raise ConfigError("tabs are not allowed in indentation", lineno)
        lines.append(_Line(lineno, indent, stripped.strip()))
    return lines


def parse_yaml_subset(text):
    """Parse the YAML subset; returns (data, {key-path tuple: line number})."""
    lines = _significant_lines(text)
    if not lines:
        raise ConfigError("empty configuration", 1)
    linemap: dict[tuple, int] = {}
    value, nxt = _parse_block(lines, 0, lines[0].indent, (), linemap)
    if nxt != len(lines):
        raise ConfigError("unexpected dedent/content after document end", lines[nxt].lineno)
    return value, linemap


def _parse_block(lines, i, indent, path, linemap):
    if lines[i].indent != indent:
        raise ConfigError("unexpected indentation", lines[i].lineno)
    if lines[i].content.startswith("- "):
        return _parse_sequence(lines, i, indent, path, linemap)
    return _parse_mapping(lines, i, indent, path, linemap)


def _parse_sequence(lines, i, indent, path, linemap):
    seq = []
    while i < len(lines) and lines[i].indent == indent and lines[i].content.startswith("- "):
        item = lines[i].content[2:].strip()
        if not item:
            raise ConfigError("empty sequence item", lines[i].lineno)
        linemap[path + (len(seq),)] = lines[i].lineno
        seq.append(_parse_scalar(item, lines[i].lineno))
        i += 1
    if i < len(lines) and lines[i].indent > indent:
        raise ConfigError("unexpected indentation after sequence item", lines[i].lineno)
    return seq, i


def _parse_mapping(lines, i, indent, path, linemap):
    mapping: dict = {}
    while i < len(lines) and lines[i].indent == indent:
        line = lines[i]
        if line.content.startswith("- "):
            raise ConfigError("sequence item inside a mapping", line.lineno)
        if ":" not in line.content:
            raise ConfigError(f"expected 'key: value', got {line.content!r}", line.lineno)
        key, _, rest = line.content.partition(":")
        key = key.strip()
        rest = rest.strip()
        if not key:
            raise ConfigError("empty mapping key", line.lineno)
        if key in mapping:
            raise ConfigError(f"duplicate key {key!r}", line.lineno)
        linemap[path + (key,)] = line.lineno
        if rest:
            mapping[key] = _parse_scalar(rest, line.lineno)
            i += 1
        else:
            if i + 1 < len(lines) and lines[i + 1].indent > indent:
                mapping[key], i = _parse_block(lines, i + 1, lines[i + 1].indent,
                                               path + (key,), linemap)
            else:
                mapping[key] = None
                i += 1
    if i < len(lines) and lines[i].indent > indent:
        raise ConfigError("unexpected indentation", lines[i].lineno)
    return mapping, i


# ----------------------------------------------------------------------
# typed experiment schema
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class MetaConfig:
    hyper_opt_alg: str = "grid"
    verbose: bool = False
    save_weights: bool = False
    validation_rate: int = 20
    validation_metric: str = "Recall@20"
    restore: bool = False


@dataclass(frozen=True)
class DataConfig:
    strategy: str
    train_path: str
    test_path: str
    val_path: str | None = None


@dataclass
class ModelSpec:
    tag: str
    meta: MetaConfig
    hyperparams: dict  # declaration-ordered; list values expand into a grid


@dataclass
class ExperimentConfig:
    backend: str
    data_config: DataConfig
    dataset: str
    models: list


_META_FIELDS = ("hyper_opt_alg", "verbose", "save_weights",
                "validation_rate", "validation_metric", "restore")

_COMMON_HP = ("lr", "epochs", "batch_size", "max_steps", "seed", "factors", "channels")
_MODEL_HP = {
    "external.ContextGNN": _COMMON_HP + ("n_layers", "aggr", "neigh",
                                         "exact_routing", "q_warm_start"),
    "MFBPR": _COMMON_HP,
    "LightGCN": _COMMON_HP + ("n_layers",),
    "ItemFilter": ("smoothing",),
}


def _require_mapping(value, what, path, linemap):
    if not isinstance(value, dict):
        raise ConfigError(f"{what} must be a mapping", linemap.get(path))
    return value


def parse_config(text):
    """Parse and validate an experiment configuration."""
    data, linemap = parse_yaml_subset(text)
    data = _require_mapping(data, "document root", (), linemap)
    if set(data) != {"experiment"}:
        extra = sorted(set(data) - {"experiment"})
        key = extra[0] if extra else "experiment"
        raise ConfigError(f"top level must contain exactly 'experiment'",
                          linemap.get((key,)))
    exp = _require_mapping(data["experiment"], "experiment", ("experiment",), linemap)

    allowed = {"backend", "data_config", "dataset", "models"}
    for key in exp:
        if key not in allowed:
            raise ConfigError(f"unknown experiment key {key!r}",
                              linemap.get(("experiment", key)))
    for key in ("data_config", "dataset", "models"):
        if key not in exp:
            raise ConfigError(f"missing experiment key {key!r}",
                              linemap.get(("experiment",)))

    dc_path = ("experiment", "data_config")
    dc = _require_mapping(exp["data_config"], "data_config", dc_path, linemap)
    dc_allowed = {"strategy", "train_path", "test_path", "val_path"}
    for key in dc:
        if key not in dc_allowed:
            raise ConfigError(f"unknown data_config key {key!r}", linemap.get(dc_path + (key,)))
    for key in ("strategy", "train_path", "test_path"):
        if key not in dc:
            raise ConfigError(f"missing data_config key {key!r}", linemap.get(dc_path))
    if dc["strategy"] != "fixed":
        raise ConfigError(f"unsupported data strategy {dc['strategy']!r} (only 'fixed')",
                          linemap.get(dc_path + ("strategy",)))
    data_config = DataConfig(strategy=dc["strategy"], train_path=str(dc["train_path"]),
                             test_path=str(dc["test_path"]),
                             val_path=str(dc["val_path"]) if dc.get("val_path") else None)

    models_path = ("experiment", "models")
    models_map = _require_mapping(exp["models"], "models", models_path, linemap)
    if not models_map:
        raise ConfigError("models section is empty", linemap.get(models_path))
    models = []
    for tag, body in models_map.items():
        tag_path = models_path + (tag,)
        if tag not in KNOWN_MODEL_TAGS:
            raise ConfigError(f"unknown model tag {tag!r}", linemap.get(tag_path))
        body = _require_mapping(body if body is not None else {}, f"model {tag}",
                                tag_path, linemap)
        meta_kwargs = {}
        if "meta" in body:
            meta_map = _require_mapping(body["meta"], "meta", tag_path + ("meta",), linemap)
            for key, value in meta_map.items():
                if key not in _META_FIELDS:
                    raise ConfigError(f"unknown meta key {key!r}",
                                      linemap.get(tag_path + ("meta", key)))
                meta_kwargs[key] = value
        meta = MetaConfig(**meta_kwargs)
        if meta.hyper_opt_alg != "grid":
            raise ConfigError(f"unsupported hyper_opt_alg {meta.hyper_opt_alg!r}",
                              linemap.get(tag_path + ("meta", "hyper_opt_alg")))

        hyper = {}
        for key, value in body.items():
            if key == "meta":
                continue
            if key not in _MODEL_HP[tag]:
                raise ConfigError(f"unknown hyperparameter {key!r} for model {tag}",
                                  linemap.get(tag_path + (key,)))
            hyper[key] = value
        spec = ModelSpec(tag=tag, meta=meta, hyperparams=hyper)
        _validate_grid_points(spec, tag_path, linemap)
        models.append(spec)

    return ExperimentConfig(
        backend=str(exp.get("backend", "")),
        data_config=data_config,
        dataset=str(exp["dataset"]),
        models=models,
    )


def _validate_grid_points(spec, tag_path, linemap):
    for point in expand_grid(spec):
        neigh = point.get("neigh")
        n_layers = point.get("n_layers")
        if neigh is not None:
            if not isinstance(neigh, tuple) or not all(isinstance(f, int) for f in neigh):
                raise ConfigError("neigh must be a tuple of integers",
                                  linemap.get(tag_path + ("neigh",)))
            if n_layers is not None and len(neigh) != n_layers:
                raise ConfigError(
                    f"neigh has {len(neigh)} entries but n_layers is {n_layers}",
                    linemap.get(tag_path + ("neigh",)))
        factors, channels = point.get("factors"), point.get("channels")
        if factors is not None and channels is not None and factors != channels:
            raise ConfigError(f"factors ({factors}) and channels ({channels}) disagree",
                              linemap.get(tag_path + ("channels",)))


def expand_grid(spec):
    """Expand list-valued hyperparameters into concrete grid points.

    Points enumerate in declaration order: the first list-valued key varies
    slowest. A single point is returned when no value is a list.
    """
    keys = list(spec.hyperparams)
    axes = []
    for key in keys:
        value = spec.hyperparams[key]
        axes.append(value if isinstance(value, list) else [value])
    return [dict(zip(keys, combo)) for combo in itertools.product(*axes)]


# ----------------------------------------------------------------------
# canonical rendering
# ----------------------------------------------------------------------

_BARE_SAFE = re.compile(r"[A-Za-z_][A-Za-z0-9_.@{}/\-]*$")


def _render_scalar(value):
    if isinstance(value, bool):
        return "True" if value else "False"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return "(" + ",".join(_render_scalar(v) for v in value) + ")"
    if isinstance(value, list):
        return "[" + ", ".join(_render_scalar(v) for v in value) + "]"
    text = str(value)
    if _BARE_SAFE.fullmatch(text) or (text.startswith("../") and " " not in text):
        return text
    return "'" + text + "'"


def render_config(config):
    """Emit the canonical text form; parse_config(render_config(c)) == c."""
    out = ["experiment:"]
    if config.backend:
        out.append(f"  backend: {_render_scalar(config.backend)}")
    out.append("  data_config:")
    out.append(f"    strategy: {_render_scalar(config.data_config.strategy)}")
    out.append(f"    train_path: {_render_scalar(config.data_config.train_path)}")
    out.append(f"    test_path: {_render_scalar(config.data_config.test_path)}")
    if config.data_config.val_path:
        out.append(f"    val_path: {_render_scalar(config.data_config.val_path)}")
    out.append(f"  dataset: {_render_scalar(config.dataset)}")
    out.append("  models:")
    for spec in config.models:
        out.append(f"    {spec.tag}:")
        out.append("      meta:")
        meta = spec.meta
        for name in _META_FIELDS:
            out.append(f"        {name}: {_render_scalar(getattr(meta, name))}")
        for key, value in spec.hyperparams.items():
            out.append(f"      {key}: {_render_scalar(value)}")
    return "\n".join(out) + "\n"
