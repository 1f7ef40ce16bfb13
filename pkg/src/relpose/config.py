"""Experiment configuration: a JSON file checked against a JSON schema.

Every scalar can be overridden on the command line with ``--set key=value``
(dotted keys for nested fields, values parsed as JSON). The output directory
can also be overridden with the ``RELPOSE_OUTPUT_DIR`` environment variable.
"""
from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .process import NoiseParams
from .simulation import DEFAULT_TAGS_0, DEFAULT_TAGS_1, InitSigmas, SimConfig

OUTPUT_DIR_ENV = "RELPOSE_OUTPUT_DIR"
RESOLVED_NAME = "resolved_config.json"

_NONNEG = {"type": "number", "minimum": 0}
_POS = {"type": "number", "exclusiveMinimum": 0}
_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_TAGS = {"type": "array", "items": _VEC3, "minItems": 1}


def _obj(props: dict) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False}


SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "relpose experiment",
    **_obj({
        "mode": {"enum": ["simulate", "replay"]},
        "trajectory": _obj({
            "kind": {"enum": ["circular", "lissajous", "static"]},
            "duration": _POS,
            "randomize": {"type": "boolean"},
        }),
        "noise": _obj({
            "sigma_gyr": _NONNEG,
            "sigma_acc": _NONNEG,
            "sigma_gyr_rw": _NONNEG,
            "sigma_acc_rw": _NONNEG,
            "sigma_range": _NONNEG,
            "sigma_neighbour_bias": _NONNEG,
            "imu_rate": _POS,
            "range_rate": _POS,
            "rmi_period": _POS,
        }),
        "init": _obj({
            "att": _NONNEG,
            "vel": _NONNEG,
            "pos": _NONNEG,
            "gyr_bias": _NONNEG,
            "acc_bias": _NONNEG,
            "mode": {"enum": ["sampled", "zero_bias", "exact"]},
        }),
        "filter": _obj({
            "bias_estimation": {"type": "boolean"},
            "gate_prob": {"oneOf": [{"type": "null"}, {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}]},
        }),
        "simulation": _obj({
            "bias_init_scale": _NONNEG,
            "neighbour_accel_bias_scale": _NONNEG,
            "bias_walk": {"type": "boolean"},
            "neighbour_accel_walk": {"type": "boolean"},
            "transient_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            "tags_0": _TAGS,
            "tags_1": _TAGS,
        }),
        "replay": _obj({
            "neighbour_id": {"type": "integer", "minimum": 1},
            "neighbour_bias_gyr": _VEC3,
        }),
        "trials": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "workers": {"type": "integer", "minimum": 1},
        "compare_bias": {"type": "boolean"},
        "output_dir": {"type": "string", "minLength": 1},
    }),
}

_N = NoiseParams()
_I = InitSigmas()
_S = SimConfig()

DEFAULTS = {
    "mode": "simulate",
    "trajectory": {"kind": _S.trajectory, "duration": _S.duration, "randomize": _S.randomize_trajectory},
    "noise": {
        "sigma_gyr": _N.sigma_gyr,
        "sigma_acc": _N.sigma_acc,
        "sigma_gyr_rw": _N.sigma_gyr_rw,
        "sigma_acc_rw": _N.sigma_acc_rw,
        "sigma_range": _N.sigma_range,
        "sigma_neighbour_bias": _N.sigma_neighbour_bias,
        "imu_rate": _N.imu_rate,
        "range_rate": _N.range_rate,
        "rmi_period": _N.rmi_period,
    },
    "init": {
        "att": _I.att,
        "vel": _I.vel,
        "pos": _I.pos,
        "gyr_bias": _I.gyr_bias,
        "acc_bias": _I.acc_bias,
        "mode": _S.init_mode,
    },
    "filter": {"bias_estimation": _S.bias_estimation, "gate_prob": _S.gate_prob},
    "simulation": {
        "bias_init_scale": _S.bias_init_scale,
        "neighbour_accel_bias_scale": _S.neighbour_accel_bias_scale,
        "bias_walk": _S.bias_walk,
        "neighbour_accel_walk": _S.neighbour_accel_walk,
        "transient_fraction": _S.transient_fraction,
        "tags_0": [list(t) for t in DEFAULT_TAGS_0],
        "tags_1": [list(t) for t in DEFAULT_TAGS_1],
    },
    "replay": {"neighbour_id": 1, "neighbour_bias_gyr": [0.0, 0.0, 0.0]},
    "trials": 1,
    "seed": 0,
    "workers": 1,
    "compare_bias": False,
    "output_dir": "relpose_out",
}


class ConfigError(ValueError):
    """Raised with every problem found, one per line in ``errors``."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {e}" for e in self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict

    @property
    def mode(self) -> str:
        return self.raw["mode"]

    @property
    def trials(self) -> int:
        return self.raw["trials"]

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def workers(self) -> int:
        return self.raw["workers"]

    @property
    def compare_bias(self) -> bool:
        return self.raw["compare_bias"]

    @property
    def output_dir(self) -> Path:
        return Path(self.raw["output_dir"])

    @property
    def noise(self) -> NoiseParams:
        return NoiseParams(**self.raw["noise"])

    def sim_config(self, bias_estimation: bool | None = None) -> SimConfig:
        r = self.raw
        init = dict(r["init"])
        mode = init.pop("mode")
        sim = r["simulation"]
        return SimConfig(
            trajectory=r["trajectory"]["kind"],
            duration=float(r["trajectory"]["duration"]),
            noise=self.noise,
            init=InitSigmas(**init),
            bias_estimation=r["filter"]["bias_estimation"] if bias_estimation is None else bias_estimation,
            init_mode=mode,
            bias_init_scale=sim["bias_init_scale"],
            neighbour_accel_bias_scale=sim["neighbour_accel_bias_scale"],
            bias_walk=sim["bias_walk"],
            neighbour_accel_walk=sim["neighbour_accel_walk"],
            tags_0=tuple(tuple(float(c) for c in t) for t in sim["tags_0"]),
            tags_1=tuple(tuple(float(c) for c in t) for t in sim["tags_1"]),
            gate_prob=r["filter"]["gate_prob"],
            transient_fraction=sim["transient_fraction"],
            randomize_trajectory=r["trajectory"]["randomize"],
        )

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True) + "\n"


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``key=value`` strings; dotted keys address nested objects."""
    data = copy.deepcopy(data)
    errors = []
    for item in overrides or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            errors.append(f"override {item!r} is not of the form key=value")
            continue
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                errors.append(f"override {key!r}: {part!r} is not an object")
                break
        else:
            node[parts[-1]] = _parse_value(value)
    if errors:
        raise ConfigError(errors)
    return data


def _path_name(err) -> str:
    path = ".".join(str(p) for p in err.absolute_path)
    return path or "<root>"


def validate(data: dict) -> list[str]:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = [f"{_path_name(e)}: {e.message}" for e in validator.iter_errors(data)]
    if not errors:
        try:
            ExperimentConfig(data).sim_config().schedule()
        except ValueError as exc:
            errors.append(f"noise: {exc}")
    return sorted(errors)


def resolve(data: dict, overrides=None, env=None) -> ExperimentConfig:
    """Fill defaults, apply overrides and the environment, and validate."""
    env = os.environ if env is None else env
    if not isinstance(data, dict):
        raise ConfigError(["<root>: configuration must be a JSON object"])
    data = apply_overrides(data, overrides)
    merged = _merge(DEFAULTS, data)
    if env.get(OUTPUT_DIR_ENV):
        merged["output_dir"] = env[OUTPUT_DIR_ENV]
    errors = validate(merged)
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(merged)


def parse_config(path, overrides=None, env=None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file {str(path)!r} does not exist"])
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: not valid JSON ({exc})"]) from exc
    return resolve(data, overrides, env)


def write_resolved(config: ExperimentConfig, directory=None) -> Path:
    directory = Path(directory) if directory is not None else config.output_dir
    directory.mkdir(parents=True, exist_ok=True)
    out = directory / RESOLVED_NAME
    out.write_text(config.to_json())
    return out
