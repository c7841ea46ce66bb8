"""Data ingestion, run configuration, and draw-store persistence.

Input series are text files with one observation per line: either a single
angle (radians, or degrees with a flag) or n comma-separated unit-vector
components. Draw stores round-trip exactly: values are written with
shortest-roundtrip decimal reprs.
"""

import hashlib
import io as _io
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._errors import ConfigError, DataError
from .directional import angle_to_unit, split_sigma
from .gibbs import FixedTheta, GibbsDraws, ModelSpec, Priors, default_priors
from .kalman import StateSpaceParams
from .rbpf import SwarmConfig

DEG2RAD = np.pi / 180.0


def ingest_series(source, degrees=False):
    """Read a unit-observation series from a path or open text stream.

    Rows are either one angle or n vector components (comma/whitespace
    separated). Vector rows with norm deviating from 1 by more than 1e-6
    are renormalized with a warning; NaN, empty, or dimensionally
    inconsistent rows raise DataError with the line number.
    """
    close = False
    if isinstance(source, (str, bytes)):
        fh = open(source, "r", encoding="utf-8")
        close = True
    else:
        fh = source
    rows = []
    width = None
    try:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                if not line:
                    raise DataError(f"line {lineno}: empty row")
                continue
            parts = [p for chunk in line.split(",") for p in chunk.split()]
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise DataError(f"line {lineno}: unparseable value ({line!r})") from exc
            if any(not np.isfinite(v) for v in vals):
                raise DataError(f"line {lineno}: non-finite value")
            if width is None:
                width = len(vals)
                if width == 0:
                    raise DataError(f"line {lineno}: empty row")
            elif len(vals) != width:
                raise DataError(
                    f"line {lineno}: expected {width} values per row, got {len(vals)}"
                )
            rows.append(vals)
    finally:
        if close:
            fh.close()
    if not rows:
        raise DataError("input series is empty")
    arr = np.asarray(rows, dtype=float)
    if width == 1:
        ang = arr[:, 0] * (DEG2RAD if degrees else 1.0)
        return angle_to_unit(np.mod(ang, 2.0 * np.pi))
    norms = np.linalg.norm(arr, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.argmax(norms == 0.0)) + 1
        raise DataError(f"line {bad}: zero vector cannot be normalized")
    off = np.abs(norms - 1.0) > 1e-6
    if np.any(off):
        worst = float(np.max(np.abs(norms - 1.0)))
        warnings.warn(
            f"{int(off.sum())} rows renormalized (max norm deviation {worst:.3e})",
            RuntimeWarning,
            stacklevel=2,
        )
    return arr / norms[:, None]


def _as_matrix(value, size, name):
    """Accept a scalar (c -> c I), flat list, or nested list for a matrix."""
    if np.isscalar(value):
        return float(value) * np.eye(size)
    arr = np.asarray(value, dtype=float)
    if arr.shape == (size, size):
        return arr
    raise ConfigError(f"{name} must be a scalar or a {size}x{size} matrix")


def _as_vector(value, size, name):
    if np.isscalar(value):
        return np.full(size, float(value))
    arr = np.asarray(value, dtype=float)
    if arr.shape == (size,):
        return arr
    raise ConfigError(f"{name} must be a scalar or a length-{size} vector")


DEFAULT_CONFIG = {
    "model": {
        "n": 2,
        "design": "local-level",  # local-level | regression | explicit
        "covariates": None,       # path to CSV of m columns (regression)
        "design_file": None,      # path to .npy of shape (T, n, p) (explicit)
        "truncate_G": True,
    },
    "priors": {},                 # overrides of the identity/zero defaults
    "fixed": {},                  # optional fixed values for Sigma, G, W
    "gibbs": {"n_iter": 2000, "burn_in": 500, "thin": 1, "n_slice_steps": 1},
    "rbpf": {"M": 1000, "tau": None, "sigma_g": 0.25, "L": 2,
             "resampling": "multinomial", "sigma_init": 1.0},
    "seed": 0,
}


def _merge(base, override):
    out = dict(base)
    for k, v in (override or {}).items():
        if k not in base:
            raise ConfigError(f"unknown config key '{k}'")
        if isinstance(base[k], dict) and isinstance(v, dict):
            out[k] = _merge(base[k], v)
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    """Validated run configuration assembled from defaults + JSON + flags."""

    raw: dict = field(default_factory=lambda: json.loads(json.dumps(DEFAULT_CONFIG)))

    @classmethod
    def load(cls, path=None, overrides=None):
        data = json.loads(json.dumps(DEFAULT_CONFIG))
        if path is not None:
            with open(path, "r", encoding="utf-8") as fh:
                try:
                    user = json.load(fh)
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"config file is not valid JSON: {exc}") from exc
            data = _merge(data, user)
        if overrides:
            data = _merge(data, overrides)
        cfg = cls(raw=data)
        cfg.validate()
        return cfg

    # -- accessors ---------------------------------------------------------

    @property
    def n(self):
        return int(self.raw["model"]["n"])

    @property
    def seed(self):
        return int(self.raw["seed"])

    def validate(self):
        model = self.raw["model"]
        if model["design"] not in ("local-level", "regression", "explicit"):
            raise ConfigError(f"unknown design '{model['design']}'")
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if model["design"] == "regression" and not model.get("covariates"):
            raise ConfigError("regression design requires a covariates file")
        if model["design"] == "explicit" and not model.get("design_file"):
            raise ConfigError("explicit design requires a design_file")
        g = self.raw["gibbs"]
        if g["n_iter"] <= g["burn_in"] or g["burn_in"] < 0 or g["thin"] < 1:
            raise ConfigError("gibbs block needs n_iter > burn_in >= 0 and thin >= 1")
        SwarmConfig(**self.raw["rbpf"])  # validates the filter block

    def canonical_json(self):
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    def design_matrices(self, T):
        """Design matrices plus the state dimension implied by the design."""
        model = self.raw["model"]
        n = self.n
        if model["design"] == "local-level":
            return np.eye(n), n
        if model["design"] == "regression":
            X = np.loadtxt(model["covariates"], delimiter=",", ndmin=2)
            if X.shape[0] < T:
                raise DataError(
                    f"covariates file has {X.shape[0]} rows, need at least {T}")
            m = X.shape[1]
            F = np.stack([np.kron(np.eye(n), X[t][None, :]) for t in range(T)])
            return F, n * m
        F = np.load(model["design_file"])
        if F.ndim != 3 or F.shape[1] != n:
            raise DataError("explicit design file must hold a (T, n, p) array")
        if F.shape[0] < T:
            raise DataError(f"design file has {F.shape[0]} periods, need {T}")
        return F[:T], F.shape[2]

    def build_priors(self, p):
        n = self.n
        pri = default_priors(n, p)
        o = self.raw["priors"]
        if "nu0" in o:
            pri.nu0 = float(o["nu0"])
        if "d0" in o:
            pri.d0 = float(o["d0"])
        for name, size in (("Psi0", p), ("Gbar0", p), ("Omega0", p),
                           ("Phi0", n - 1), ("Lambda0", n - 1), ("P0", p)):
            if name in o:
                setattr(pri, name, _as_matrix(o[name], size, name))
        for name, size in (("gammabar0", n - 1), ("s0_mean", p)):
            if name in o:
                setattr(pri, name, _as_vector(o[name], size, name))
        return Priors(**{k: getattr(pri, k) for k in (
            "nu0", "Psi0", "Gbar0", "Omega0", "d0", "Phi0", "gammabar0",
            "Lambda0", "s0_mean", "P0")})

    def build_fixed(self, p):
        n = self.n
        fx = self.raw["fixed"]
        kwargs = {}
        if fx.get("Sigma") is not None:
            kwargs["Sigma"] = _as_matrix(fx["Sigma"], n, "fixed Sigma")
        if fx.get("G") is not None:
            kwargs["G"] = _as_matrix(fx["G"], p, "fixed G")
        if fx.get("W") is not None:
            kwargs["W"] = _as_matrix(fx["W"], p, "fixed W")
        return FixedTheta(**kwargs)

    def build_spec(self, T):
        F, p = self.design_matrices(T)
        return ModelSpec(
            n=self.n, p=p, F=F, priors=self.build_priors(p),
            fixed=self.build_fixed(p),
            truncate_G=bool(self.raw["model"]["truncate_G"]),
        )

    def build_filter_params(self, T):
        """StateSpaceParams for the filter; all of theta must be fixed."""
        F, p = self.design_matrices(T)
        fixed = self.build_fixed(p)
        if fixed.Sigma is None or fixed.G is None or fixed.W is None:
            raise ConfigError(
                "online filtering treats the static parameters as known: "
                "provide fixed Sigma, G, and W in the config")
        pri = self.build_priors(p)
        return StateSpaceParams(F=F, G=fixed.G, W=fixed.W, Sigma=fixed.Sigma,
                                s0_mean=pri.s0_mean, P0=pri.P0)

    def swarm_config(self):
        return SwarmConfig(**self.raw["rbpf"])


# ---------------------------------------------------------------------------
# Draw-store persistence
# ---------------------------------------------------------------------------

def _theta_columns(n, p, with_paths, with_lengths, T):
    k = n - 1
    cols = []
    cols += [f"Gamma_{i}_{j}" for i in range(k) for j in range(k)]
    cols += [f"gamma_{i}" for i in range(k)]
    cols += [f"G_{i}_{j}" for i in range(p) for j in range(p)]
    cols += [f"W_{i}_{j}" for i in range(p) for j in range(p)]
    cols += [f"Sigma_{i}_{j}" for i in range(n) for j in range(n)]
    cols += [f"s_last_{i}" for i in range(p)]
    if with_paths:
        cols += [f"path_{t}_{i}" for t in range(T + 1) for i in range(p)]
    if with_lengths:
        cols += [f"r_{t}" for t in range(1, T + 1)]
    return cols


def save_draws_csv(draws, path, config_hash=""):
    """Write a draw store as CSV with a commented metadata header."""
    with_paths = draws.paths is not None
    with_lengths = draws.lengths is not None
    cols = _theta_columns(draws.n, draws.p, with_paths, with_lengths, draws.T)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# projdlm-draws v1\n")
        fh.write(f"# n={draws.n} p={draws.p} T={draws.T}\n")
        fh.write(f"# seed={draws.seed if draws.seed is not None else ''}\n")
        fh.write(f"# config_hash={config_hash}\n")
        fh.write("iteration," + ",".join(cols) + "\n")
        for i in range(len(draws)):
            parts = [str(int(draws.iterations[i]))]
            parts += [repr(v) for v in draws.Gamma[i].ravel()]
            parts += [repr(v) for v in draws.gamma[i].ravel()]
            parts += [repr(v) for v in draws.G[i].ravel()]
            parts += [repr(v) for v in draws.W[i].ravel()]
            parts += [repr(v) for v in draws.Sigma[i].ravel()]
            parts += [repr(v) for v in draws.s_last[i].ravel()]
            if with_paths:
                parts += [repr(v) for v in draws.paths[i].ravel()]
            if with_lengths:
                parts += [repr(v) for v in draws.lengths[i].ravel()]
            fh.write(",".join(parts) + "\n")


def load_draws_csv(path):
    """Read a draw store written by save_draws_csv; exact round-trip."""
    meta = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = None
        body = []
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        k, v = tok.split("=", 1)
                        meta[k] = v
                continue
            if header is None:
                header = line.split(",")
                continue
            if line:
                body.append(line.split(","))
    if header is None or not body:
        raise DataError(f"{path}: not a draw-store file")
    try:
        n, p, T = int(meta["n"]), int(meta["p"]), int(meta["T"])
    except KeyError as exc:
        raise DataError(f"{path}: missing metadata field {exc}") from exc
    k = n - 1
    data = np.array([[float(v) for v in row[1:]] for row in body])
    iters = np.array([int(row[0]) for row in body])
    K = data.shape[0]
    sizes = [k * k, k, p * p, p * p, n * n, p]
    names = ["Gamma", "gamma", "G", "W", "Sigma", "s_last"]
    with_paths = any(c.startswith("path_") for c in header)
    with_lengths = any(c.startswith("r_") for c in header)
    if with_paths:
        sizes.append((T + 1) * p)
        names.append("paths")
    if with_lengths:
        sizes.append(T)
        names.append("lengths")
    if sum(sizes) != data.shape[1]:
        raise DataError(f"{path}: column count does not match metadata")
    out = {}
    start = 0
    for nm, sz in zip(names, sizes):
        out[nm] = data[:, start : start + sz]
        start += sz
    seed = meta.get("seed") or None
    return GibbsDraws(
        Gamma=out["Gamma"].reshape(K, k, k),
        gamma=out["gamma"].reshape(K, k),
        G=out["G"].reshape(K, p, p),
        W=out["W"].reshape(K, p, p),
        Sigma=out["Sigma"].reshape(K, n, n),
        s_last=out["s_last"].reshape(K, p),
        iterations=iters,
        n=n, p=p, T=T,
        seed=int(seed) if seed else None,
        paths=out["paths"].reshape(K, T + 1, p) if with_paths else None,
        lengths=out["lengths"].reshape(K, T) if with_lengths else None,
    ), meta


def save_draws_npz(draws, path, config_hash=""):
    """Compact binary draw store with an embedded schema hash."""
    schema = f"projdlm-draws-npz-v1:n={draws.n}:p={draws.p}:T={draws.T}"
    arrays = {
        "Gamma": draws.Gamma, "gamma": draws.gamma, "G": draws.G, "W": draws.W,
        "Sigma": draws.Sigma, "s_last": draws.s_last, "iterations": draws.iterations,
        "meta": np.array([schema, config_hash,
                          str(draws.seed if draws.seed is not None else "")]),
    }
    if draws.paths is not None:
        arrays["paths"] = draws.paths
    if draws.lengths is not None:
        arrays["lengths"] = draws.lengths
    np.savez_compressed(path, **arrays)


def load_draws_npz(path):
    with np.load(path, allow_pickle=False) as z:
        meta = [str(x) for x in z["meta"]]
        schema = meta[0]
        if not schema.startswith("projdlm-draws-npz-v1:"):
            raise DataError(f"{path}: unknown draw-store schema")
        dims = dict(tok.split("=") for tok in schema.split(":")[1:])
        seed = meta[2]
        return GibbsDraws(
            Gamma=z["Gamma"], gamma=z["gamma"], G=z["G"], W=z["W"],
            Sigma=z["Sigma"], s_last=z["s_last"], iterations=z["iterations"],
            n=int(dims["n"]), p=int(dims["p"]), T=int(dims["T"]),
            seed=int(seed) if seed else None,
            paths=z["paths"] if "paths" in z.files else None,
            lengths=z["lengths"] if "lengths" in z.files else None,
        ), {"config_hash": meta[1]}


def write_metrics_json(path, metrics):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_two_column_csv(path, x, y, header):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{header[0]},{header[1]}\n")
        for a, b in zip(x, y):
            fh.write(f"{a!r},{b!r}\n")


def write_series(path, obs, as_angles=True):
    """Write a unit-observation series (angles for n = 2 by default)."""
    obs = np.asarray(obs)
    with open(path, "w", encoding="utf-8") as fh:
        if as_angles and obs.shape[1] == 2:
            from .directional import unit_to_angle

            for a in unit_to_angle(obs):
                fh.write(f"{a!r}\n")
        else:
            for row in obs:
                fh.write(",".join(repr(v) for v in row) + "\n")
