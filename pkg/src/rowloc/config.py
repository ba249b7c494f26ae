"""Plain-text key=value experiment configuration.

One `key = value` per line; '#' starts a comment.  Keys use dotted
prefixes per sub-spec (scene., sensor., trajectory., template., mcl.,
controller., run.); all values in SI units.  Unknown keys are an error
so typos do not silently fall back to defaults.
"""

from __future__ import annotations

import math
from dataclasses import replace
from pathlib import Path

from .geometry import Box3, PreprocessConfig
from .harness import ControllerGains, ExperimentConfig
from .mcl import MclConfig, UniformPrior
from .synth import OrchardSpec, SensorSpec, TrajectorySpec, apricot_preset, vineyard_preset
from .template import TemplateConfig, default_row_range


class ConfigError(ValueError):
    pass


def parse_kv_file(path) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _f(v: str) -> float:
    if v.lower() in ("inf", "infinity"):
        return math.inf
    return float(v)


def _box(v: str) -> Box3:
    parts = [float(p) for p in v.split()]
    if len(parts) != 6:
        raise ConfigError(f"box needs 6 numbers (xmin xmax ymin ymax zmin zmax), got {v!r}")
    return Box3.from_ranges(parts[0:2], parts[2:4], parts[4:6])


def experiment_config_from_kv(kv: dict[str, str]) -> ExperimentConfig:
    """Build an ExperimentConfig from parsed key=value pairs."""
    kv = dict(kv)

    def pop(key, default=None):
        return kv.pop(key, default)

    preset = pop("scene.preset", "vineyard")
    if preset == "vineyard":
        scene = vineyard_preset()
    elif preset == "apricot":
        scene = apricot_preset()
    else:
        raise ConfigError(f"unknown scene.preset {preset!r}")
    scene_fields = {
        "row_spacing": _f, "plant_spacing": _f, "row_length": _f, "profile": str,
        "canopy_height": _f, "canopy_thickness": _f, "foliage_density": _f,
        "ground_density": _f, "trunk_height": _f,
    }
    for name, conv in scene_fields.items():
        v = pop(f"scene.{name}")
        if v is not None:
            scene = replace(scene, **{name: conv(v)})

    sensor = SensorSpec()
    for name in ("hfov", "vfov", "max_range", "noise_coeff", "noise_cap_fraction", "mount_height"):
        v = pop(f"sensor.{name}")
        if v is not None:
            sensor = replace(sensor, **{name: _f(v)})

    traj = TrajectorySpec()
    for name in ("speed", "frame_rate", "amplitude", "wavelength", "vehicle_half_width"):
        v = pop(f"trajectory.{name}")
        if v is not None:
            traj = replace(traj, **{name: _f(v)})

    tpl = TemplateConfig(row_range=default_row_range(scene.row_spacing))
    v = pop("template.resolution")
    if v is not None:
        tpl = replace(tpl, resolution=_f(v))
    v = pop("template.range")
    if v is not None:
        box = _box(v)
        tpl = replace(tpl, template_range=box, row_range=default_row_range(scene.row_spacing, box))
    v = pop("template.row_range")
    if v is not None:
        tpl = replace(tpl, row_range=_box(v))
    v = pop("template.no_info_frequency")
    if v is not None:
        tpl = replace(tpl, no_info_frequency=None if v == "auto" else _f(v))

    prior = UniformPrior()
    for name in ("y_min", "y_max", "theta_min", "theta_max"):
        v = pop(f"mcl.prior.{name}")
        if v is not None:
            prior = replace(prior, **{name: _f(v)})
    pre = PreprocessConfig()
    v = pop("preprocess.leaf_size")
    if v is not None:
        pre = replace(pre, leaf_size=_f(v))
    mcl = MclConfig(prior=prior, pre_cfg=pre)
    for name, conv in (("n_particles", int), ("p_floor", _f),
                       ("low_conf_std_y", _f), ("low_conf_std_theta", _f)):
        v = pop(f"mcl.{name}")
        if v is not None:
            mcl = replace(mcl, **{name: conv(v)})

    gains = ControllerGains()
    for name in ("k_y", "k_theta", "max_steer_rate"):
        v = pop(f"controller.{name}")
        if v is not None:
            gains = replace(gains, **{name: _f(v)})

    cfg = ExperimentConfig(
        scene=scene, sensor=sensor, trajectory=traj,
        template_cfg=tpl, mcl_cfg=mcl, gains=gains,
    )
    for name, conv in (("method", str), ("n_template_frames", int),
                       ("n_eval_frames", int), ("seed", int)):
        v = pop(f"run.{name}")
        if v is not None:
            cfg = replace(cfg, **{name: conv(v)})

    if kv:
        raise ConfigError(f"unknown config keys: {sorted(kv)}")
    return cfg


def load_experiment_config(path) -> ExperimentConfig:
    return experiment_config_from_kv(parse_kv_file(path))
