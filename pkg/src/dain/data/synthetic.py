"""Procedural view-dependent surfaces rendered along the viewing arc.

Each surface has a flat base layer and a partially covering relief layer
raised ``height`` pixels above it.  Both carry band-limited sinusoidal
textures.  The relief layer has bump-mapped normals and a Blinn-Phong
specular lobe.  Under orthographic projection the raised layer shifts
against the base by ``height * tan(theta)`` along the viewing azimuth, so
a small azimuth change moves the two layers differently.  After global
alignment that parallax, together with the specular change, is what the
differential image records.

Classes come in pairs sharing a texture family, colours and lobe width;
the pair members differ in relief height.  A single view hides the height
(the layer offset is indistinguishable from a new texture phase), so the
pair is separable mainly through angular differences.
"""
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..core.rng import make_rng
from ..imaging.png import write_png
from .layout import DELTAS, THETAS, DatasetIndex, SurfaceInstance, ViewRecord, view_filename

__all__ = ["SyntheticConfig", "class_prior", "instance_params", "render_view",
           "generate_synthetic", "CONTROL_CLASS"]

FAMILY_NAMES = ("ripple", "weave", "speckle", "grain", "mottle", "streak")
CONTROL_CLASS = "flat_control"


@dataclass(frozen=True)
class SyntheticConfig:
    n_classes: int = 8
    instances_per_class: int = 12
    image_size: int = 32
    seed: int = 0
    n_conditions: int = 4
    control_class: bool = False
    noise: float = 0.01
    view_jitter: float = 0.5
    raised_height: float = 28.0

    def validate(self):
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.instances_per_class < 4:
            raise ValueError("need at least 4 instances per class")
        if self.image_size < 16:
            raise ValueError("image_size must be at least 16")
        if self.n_conditions < 1:
            raise ValueError("need at least one illumination condition")

    def class_names(self):
        names = []
        for k in range(self.n_classes):
            fam = k // 2
            base = FAMILY_NAMES[fam % len(FAMILY_NAMES)] + (str(fam // len(FAMILY_NAMES))
                                                            if fam >= len(FAMILY_NAMES) else "")
            names.append(f"{base}_{'low' if k % 2 == 0 else 'high'}")
        if self.control_class:
            names.append(CONTROL_CLASS)
        return names


def _band(rng, n, fmin, fmax, angle, spread):
    freq = rng.uniform(fmin, fmax, n)
    ang = angle + rng.normal(0, spread, n)
    return np.stack([freq * np.cos(ang), freq * np.sin(ang)], axis=1)


def class_prior(config, k):
    """Parameters shared by every instance of class ``k``."""
    names = config.class_names()
    if names[k] == CONTROL_CLASS:
        # low band: its only differential is interpolation residual after alignment
        rng = make_rng(config.seed, "control")
        return {"name": names[k], "fmin": 1 / 24, "fmax": 1 / 12,
                "angle": float(rng.uniform(0, np.pi)), "spread": 1.0,
                "base_color": rng.uniform(0.3, 0.8, 3).tolist(),
                "top_color": rng.uniform(0.3, 0.8, 3).tolist(),
                "coverage": 0.0, "bump": 0.0, "specular": 0.0, "shininess": 1.0,
                "height": 0.0}
    fam = make_rng(config.seed, "family", k // 2)
    prior = {
        "name": names[k],
        "fmin": float(fam.uniform(1 / 16, 1 / 10)),
        "fmax": float(fam.uniform(1 / 8, 1 / 5)),
        "angle": float(fam.uniform(0, np.pi)),
        "spread": float(fam.uniform(0.9, 1.4)),
        "base_color": fam.uniform(0.15, 0.7, 3).tolist(),
        "top_color": fam.uniform(0.3, 0.9, 3).tolist(),
        "coverage": float(fam.uniform(0.35, 0.6)),
        "bump": float(fam.uniform(0.4, 0.8)),
        "specular": float(fam.uniform(0.25, 0.45)),
        "shininess": float(fam.uniform(15, 50)),
    }
    prior["height"] = config.raised_height if k % 2 else 0.0
    return prior


def instance_params(config, k, j):
    """Class parameters perturbed and texture phases drawn for instance ``j``."""
    prior = class_prior(config, k)
    rng = make_rng(config.seed, "instance", k, j)
    n = 10

    def texture():
        return {"k": _band(rng, n, prior["fmin"], prior["fmax"], prior["angle"], prior["spread"]),
                "phase": rng.uniform(0, 2 * np.pi, n),
                "amp": rng.uniform(0.5, 1.0, n)}

    p = dict(prior)
    p["base_tex"] = texture()
    p["top_tex"] = texture()
    p["mask_tex"] = {"k": _band(rng, 6, 1 / 24, 1 / 12, 0.0, np.pi),
                     "phase": rng.uniform(0, 2 * np.pi, 6),
                     "amp": rng.uniform(0.5, 1.0, 6)}
    p["base_color"] = np.clip(np.array(prior["base_color"]) * rng.uniform(0.9, 1.1, 3), 0, 1)
    p["top_color"] = np.clip(np.array(prior["top_color"]) * rng.uniform(0.9, 1.1, 3), 0, 1)
    p["height"] = prior["height"] * rng.uniform(0.85, 1.15)
    p["shininess"] = prior["shininess"] * rng.uniform(0.9, 1.1)
    p["gain"] = rng.uniform(0.9, 1.1)
    return p


def _wave(tex, sx, sy):
    """Normalised texture value and its gradient at surface coordinates."""
    k, phase, amp = tex["k"], tex["phase"], tex["amp"]
    arg = 2 * np.pi * (sx[..., None] * k[:, 0] + sy[..., None] * k[:, 1]) + phase
    norm = np.sqrt(0.5 * (amp ** 2).sum())
    val = (amp * np.sin(arg)).sum(-1) / norm
    dcos = amp * np.cos(arg) * 2 * np.pi / norm
    return val, (dcos * k[:, 0]).sum(-1), (dcos * k[:, 1]).sum(-1)


def _light(condition):
    az = np.deg2rad(90.0 * condition + 20.0)
    el = np.deg2rad((50.0, 40.0, 60.0, 35.0)[condition % 4])
    power = (1.0, 0.85, 0.95, 0.75)[condition % 4]
    return np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)]), power


def render_view(params, theta_deg, delta_deg, condition, size, rng=None, noise=0.0,
                jitter=(0.0, 0.0), phi_deg=0.0):
    """Render one H×W×3 view in [0, 1].

    The camera looks from polar angle ``theta_deg`` and azimuth
    ``phi_deg + delta_deg``.  ``jitter`` is a pixel offset of the camera.
    """
    theta = np.deg2rad(theta_deg)
    phi = np.deg2rad(phi_deg + delta_deg)
    c = (size - 1) / 2
    w, u = np.mgrid[0:size, 0:size].astype(np.float64)
    u = u - c + jitter[0]
    w = w - c + jitter[1]
    cos_p, sin_p = np.cos(phi), np.sin(phi)

    def surface(z):
        # orthographic camera: a point at height z appears shifted by z*tan(theta)
        a = (u + z * np.sin(theta)) / np.cos(theta)
        return cos_p * a - sin_p * w, sin_p * a + cos_p * w

    view = np.array([np.sin(theta) * cos_p, np.sin(theta) * sin_p, np.cos(theta)])
    light, power = _light(condition)
    half = (light + view) / np.linalg.norm(light + view)

    bx, by = surface(0.0)
    tb, _, _ = _wave(params["base_tex"], bx, by)
    base = np.asarray(params["base_color"]) * (0.75 + 0.2 * tb)[..., None]
    base = base * (0.25 + 0.75 * max(light[2], 0.0))

    tx, ty = surface(params["height"])
    mv, _, _ = _wave(params["mask_tex"], tx, ty)
    cover = params["coverage"]
    if cover > 0:
        mask = 1 / (1 + np.exp(-(mv - (1 - 2 * cover)) / 0.08))
    else:
        mask = np.zeros_like(mv)
    tt, gx, gy = _wave(params["top_tex"], tx, ty)
    nrm = np.stack([-params["bump"] * gx, -params["bump"] * gy, np.ones_like(gx)], axis=-1)
    nrm /= np.linalg.norm(nrm, axis=-1, keepdims=True)
    diffuse = np.clip(nrm @ light, 0, None)
    spec = params["specular"] * np.clip(nrm @ half, 0, None) ** params["shininess"]
    top = np.asarray(params["top_color"]) * (0.7 + 0.3 * tt)[..., None]
    top = top * (0.25 + 0.75 * diffuse)[..., None] + spec[..., None]

    img = params["gain"] * power * (mask[..., None] * top + (1 - mask[..., None]) * base)
    if rng is not None and noise > 0:
        img = img + rng.normal(0, noise, img.shape)
    return np.clip(img, 0, 1)


def _render_instance(args):
    config, k, j, root = args
    params = instance_params(config, k, j)
    name = config.class_names()[k]
    inst_dir = Path(root) / name / f"inst{j:02d}"
    views = []
    for cond in range(config.n_conditions):
        cdir = inst_dir / f"cond{cond}"
        cdir.mkdir(parents=True, exist_ok=True)
        for theta in THETAS:
            for delta in DELTAS:
                rng = make_rng(config.seed, "view", k, j, cond, theta + 100, delta)
                jit = rng.normal(0, config.view_jitter, 2)
                img = render_view(params, theta, delta, cond, config.image_size, rng,
                                  config.noise, jitter=jit)
                path = cdir / view_filename(theta, delta)
                write_png(path, img)
                views.append(ViewRecord(theta, delta, f"cond{cond}", path=str(path)))
    return SurfaceInstance(name, f"{name}/inst{j:02d}", views)


def generate_synthetic(config, root, workers=1):
    """Render the full tree under ``root`` and return its index.

    Every view has its own seeded stream, so the output is bitwise
    identical for a given config whatever ``workers`` is.
    """
    config.validate()
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    n_cls = len(config.class_names())
    jobs = [(config, k, j, str(root)) for k in range(n_cls)
            for j in range(config.instances_per_class)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            instances = list(pool.map(_render_instance, jobs))
    else:
        instances = [_render_instance(job) for job in jobs]
    meta = {"generator": asdict(config),
            "classes": [class_prior(config, k) for k in range(n_cls)]}
    (root / "synthetic.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return DatasetIndex(str(root), instances, config.n_conditions)
