"""Jointly correlated Rayleigh channels for the UT-RIS-BS uplink.

The UT-to-RIS channel of UT k is ``U2[k] @ Ht @ V2[k].conj().T`` where the
entries of ``Ht`` are independent zero-mean complex Gaussians with variance
profile ``Omega[k]``.  Statistics come from a separable exponential
correlation model; the composite path loss sits entirely on ``H1``.

Random draws of ``Ht`` are indexable: draw ``i`` of UT ``k`` occupies a fixed
block of a counter-based (Philox) stream keyed by ``(seed, k)``, so any
subset of draws can be produced in any order, batched or one at a time, with
bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ChannelParams, SystemConfig

__all__ = [
    "ChannelModel",
    "ChannelDraw",
    "exp_correlation",
    "generate_channel",
    "draw_h2",
    "draw_h2_batch",
    "effective_channel",
]

_TWO_M53 = 2.0 ** -53


@dataclass(frozen=True, eq=False)
class ChannelModel:
    """Deterministic channel data known to the optimizer.

    Attributes
    ----------
    H1 : (M, N_R) complex array
        RIS-to-BS channel (instantaneously known).
    U2, V2 : list of unitary arrays
        Receive (N_R x N_R) and transmit (N_k x N_k) eigenbases per UT.
    Omega : list of (N_R, N_k) nonnegative arrays
        Eigenmode coupling matrices (variance profiles).
    """

    H1: np.ndarray
    U2: tuple
    V2: tuple
    Omega: tuple

    def __post_init__(self):
        for name in ("U2", "V2", "Omega"):
            arrs = tuple(np.asarray(a) for a in getattr(self, name))
            for a in arrs:
                a.setflags(write=False)
            object.__setattr__(self, name, arrs)
        H1 = np.asarray(self.H1, dtype=complex)
        H1.setflags(write=False)
        object.__setattr__(self, "H1", H1)
        if not (len(self.U2) == len(self.V2) == len(self.Omega)):
            raise ValueError("U2, V2 and Omega must have one entry per UT")
        for U, V, Om in zip(self.U2, self.V2, self.Omega):
            if U.shape != (self.N_R, self.N_R) or Om.shape != (self.N_R, V.shape[0]) \
                    or V.shape[0] != V.shape[1]:
                raise ValueError("inconsistent channel dimensions")

    @property
    def K(self) -> int:
        return len(self.U2)

    @property
    def M(self) -> int:
        return self.H1.shape[0]

    @property
    def N_R(self) -> int:
        return self.H1.shape[1]

    @property
    def N_k(self) -> tuple:
        return tuple(V.shape[0] for V in self.V2)

    def cascaded_bases(self, phi: np.ndarray) -> list[np.ndarray]:
        """``H1 @ diag(phi) @ U2[k]`` for every UT (M x N_R each)."""
        H1phi = self.H1 * np.asarray(phi)[None, :]
        return [H1phi @ U for U in self.U2]

    def with_omega(self, Omega) -> "ChannelModel":
        return ChannelModel(self.H1, self.U2, self.V2, tuple(Omega))

    def __eq__(self, other):
        if not isinstance(other, ChannelModel) or self.K != other.K:
            return NotImplemented
        pairs = [(self.H1, other.H1)] + list(zip(self.U2 + self.V2 + self.Omega,
                                                 other.U2 + other.V2 + other.Omega))
        return all(a.shape == b.shape and np.array_equal(a, b) for a, b in pairs)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ChannelDraw:
    """One realisation of the random inner matrices, one (N_R, N_k) per UT."""

    Ht: tuple


def exp_correlation(n: int, rho: float) -> np.ndarray:
    """Exponential correlation matrix ``[R]_ij = rho**|i-j|``."""
    idx = np.arange(n)
    return float(rho) ** np.abs(idx[:, None] - idx[None, :])


def _eig_psd(R: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, U = np.linalg.eigh(R)
    return np.clip(w, 0.0, None), U


def generate_channel(cfg: SystemConfig, seed: int,
                     params: ChannelParams | None = None,
                     rho_range: tuple[float, float] | None = None) -> ChannelModel:
    """Draw a synthetic channel model; a pure function of ``(cfg, seed, params)``.

    ``rho_range`` overrides ``params.rho_min/rho_max``.
    """
    params = params or ChannelParams()
    lo, hi = rho_range if rho_range is not None else params.rho_range
    if not (0.0 <= lo <= hi < 1.0):
        raise ValueError(f"rho_range must lie in [0, 1), got {(lo, hi)}")
    if min(cfg.K, cfg.M, cfg.N_R, *cfg.N_k) < 1:
        raise ValueError("degenerate dimensions")

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5249]))
    var = 10.0 ** (params.path_loss_db / 10.0)
    shape = (cfg.M, cfg.N_R)
    H1 = np.sqrt(var / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    U2, V2, Omega = [], [], []
    for k in range(cfg.K):
        rho_r, rho_t = rng.uniform(lo, hi, size=2)
        lam_r, U = _eig_psd(exp_correlation(cfg.N_R, rho_r))
        lam_t, V = _eig_psd(exp_correlation(cfg.N_k[k], rho_t))
        Om = np.outer(lam_r, lam_t)
        Om *= (cfg.N_R * cfg.N_k[k]) / Om.sum()
        U2.append(U.astype(complex))
        V2.append(V.astype(complex))
        Omega.append(Om)
    return ChannelModel(H1, tuple(U2), tuple(V2), tuple(Omega))


def _stream_key(seed: int, k: int) -> np.ndarray:
    return np.random.SeedSequence([int(seed), int(k), 0x4832]).generate_state(2, np.uint64)


def _gaussian_block(seed: int, k: int, start: int, count: int, n_entries: int) -> np.ndarray:
    """Unit-variance complex Gaussians for draws ``start..start+count-1``.

    Each draw consumes a fixed counter block of the Philox stream; uniforms
    are turned into complex normals by the Box-Muller map.
    """
    words = 2 * n_entries
    ctr_per_draw = -(-words // 4)
    bg = np.random.Philox(key=_stream_key(seed, k),
                          counter=np.array([start * ctr_per_draw, 0, 0, 0], dtype=np.uint64))
    raw = bg.random_raw(count * ctr_per_draw * 4).reshape(count, ctr_per_draw * 4)[:, :words]
    u = (raw >> np.uint64(11)).astype(np.float64) * _TWO_M53
    u1, u2 = u[:, 0::2], u[:, 1::2]
    r = np.sqrt(-np.log1p(-u1))  # |h|^2 = r^2 ~ Exp(1)
    return r * np.exp(2j * np.pi * u2)


def draw_h2_batch(model: ChannelModel, seed: int, start: int, count: int) -> list[np.ndarray]:
    """Draws ``start..start+count-1`` stacked per UT as (count, N_R, N_k) arrays."""
    out = []
    for k, Om in enumerate(model.Omega):
        g = _gaussian_block(seed, k, start, count, Om.size).reshape(count, *Om.shape)
        out.append(g * np.sqrt(Om)[None])
    return out


def draw_h2(model: ChannelModel, seed: int, draw_index: int) -> ChannelDraw:
    """Single realisation; identical to row ``draw_index`` of any batch."""
    return ChannelDraw(tuple(h[0] for h in draw_h2_batch(model, seed, draw_index, 1)))


def effective_channel(model: ChannelModel, phi: np.ndarray, draw: ChannelDraw,
                      k: int) -> np.ndarray:
    """``H1 diag(phi) U2[k] Ht[k] V2[k]^H`` (M x N_k)."""
    phi = np.asarray(phi)
    Ht = np.asarray(draw.Ht[k])
    if phi.shape != (model.N_R,) or Ht.shape != model.Omega[k].shape:
        raise ValueError("dimension mismatch between model, phase vector and draw")
    return (model.H1 * phi[None, :]) @ model.U2[k] @ Ht @ model.V2[k].conj().T
