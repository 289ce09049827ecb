"""Enrollment, thresholding, authentication, and template maintenance.

A wearer enrolls by streaming a few minutes of signal.  The stream is
cut into fixed non-overlapping windows; each window is denoised, mapped
to identity-branch features, and embedded on the unit sphere.  The
enrollment center is the arithmetic mean of those embeddings (left
un-normalized: its length encodes how tightly the windows agree).
Genuine and impostor distances to the center set a decision threshold
at the equal-error point of their empirical FAR/FRR curves.

Authentication embeds query windows the same way and accepts when the
mean Euclidean distance to the center falls below the threshold.
Accepted high-confidence queries can later be folded back into the
center to track slow drift in the wearer's signal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .core import SignalSegment
from .denoise import denoise_inherent
from .disentangle import HidnetConfig, ModelParams, hidnet_features
from .siamese import SiameseParams, embed

__all__ = [
    "AuthPipeline",
    "AuthProfile",
    "eer_threshold",
    "register",
    "register_embeddings",
    "authenticate",
    "authenticate_embeddings",
    "update_template",
    "save_profile",
    "load_profile",
]

PROFILE_SCHEMA_VERSION = 1


@dataclass
class AuthPipeline:
    """Trained models plus the windowing convention that feeds them."""

    hidnet: ModelParams
    hidnet_cfg: HidnetConfig
    metric: SiameseParams
    fs: float = 100.0
    window_s: float = 4.0
    denoise: bool = True

    @property
    def window_len(self) -> int:
        return int(round(self.window_s * self.fs))

    def split_windows(self, samples: np.ndarray) -> np.ndarray:
        """Non-overlapping windows; a trailing partial window is dropped."""
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("expected a 1-D sample stream")
        w = self.window_len
        k = len(samples) // w
        if k == 0:
            raise ValueError(
                f"stream of {len(samples)} samples is shorter than one "
                f"{w}-sample window")
        return samples[:k * w].reshape(k, w)

    def embed_windows(self, windows: np.ndarray) -> np.ndarray:
        """Window rows -> unit embeddings (denoise, features, embed)."""
        windows = np.atleast_2d(np.asarray(windows, dtype=np.float64))
        if self.denoise:
            windows = np.stack([
                denoise_inherent(SignalSegment(w, self.fs)).samples
                for w in windows])
        feats = hidnet_features(self.hidnet, self.hidnet_cfg, windows)
        return embed(self.metric, feats)

    def embed_stream(self, samples) -> np.ndarray:
        if isinstance(samples, SignalSegment):
            if samples.fs != self.fs:
                raise ValueError(f"stream at {samples.fs} Hz, pipeline expects "
                                 f"{self.fs} Hz")
            samples = samples.samples
        return self.embed_windows(self.split_windows(samples))


@dataclass
class AuthProfile:
    """Enrollment state: center, threshold, and the distances behind it."""

    center: np.ndarray
    tau: float
    m: int                      # embeddings folded into the center
    d_gen: np.ndarray
    d_imp: np.ndarray
    created_at: str
    update_log: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema_version": PROFILE_SCHEMA_VERSION,
            "center": self.center.tolist(),
            "tau": float(self.tau),
            "m": int(self.m),
            "d_gen": np.asarray(self.d_gen).tolist(),
            "d_imp": np.asarray(self.d_imp).tolist(),
            "created_at": self.created_at,
            "update_log": self.update_log,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AuthProfile":
        if d.get("schema_version") != PROFILE_SCHEMA_VERSION:
            raise ValueError(f"unsupported profile schema "
                             f"{d.get('schema_version')!r}")
        return cls(
            center=np.asarray(d["center"], dtype=np.float64),
            tau=float(d["tau"]),
            m=int(d["m"]),
            d_gen=np.asarray(d["d_gen"], dtype=np.float64),
            d_imp=np.asarray(d["d_imp"], dtype=np.float64),
            created_at=d["created_at"],
            update_log=list(d.get("update_log", [])),
        )


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def far_frr(d_gen: np.ndarray, d_imp: np.ndarray, t: float) -> tuple[float, float]:
    """Empirical rates at threshold t: FAR counts d_imp < t, FRR d_gen >= t."""
    d_gen = np.asarray(d_gen, dtype=np.float64)
    d_imp = np.asarray(d_imp, dtype=np.float64)
    far = float(np.count_nonzero(d_imp < t)) / len(d_imp)
    frr = float(np.count_nonzero(d_gen >= t)) / len(d_gen)
    return far, frr


def eer_threshold(d_gen: np.ndarray, d_imp: np.ndarray,
                  grid_points: int = 1000) -> tuple[float, float, float]:
    """Equal-error threshold over a uniform grid of candidate cutoffs.

    The grid spans the pooled distance range; the threshold minimizing
    |FAR - FRR| wins, with ties resolved toward the smaller (stricter)
    cutoff because the grid is scanned in ascending order.
    Returns (tau, far_at_tau, frr_at_tau).
    """
    d_gen = np.asarray(d_gen, dtype=np.float64)
    d_imp = np.asarray(d_imp, dtype=np.float64)
    if d_gen.size == 0 or d_imp.size == 0:
        raise ValueError("need both genuine and impostor distances")
    pooled = np.concatenate([d_gen, d_imp])
    grid = np.linspace(pooled.min(), pooled.max(), grid_points)
    far = (d_imp[None, :] < grid[:, None]).mean(axis=1)
    frr = (d_gen[None, :] >= grid[:, None]).mean(axis=1)
    best = int(np.argmin(np.abs(far - frr)))
    return float(grid[best]), float(far[best]), float(frr[best])


def register_embeddings(gen_emb: np.ndarray, imp_emb: np.ndarray,
                        grid_points: int = 1000) -> AuthProfile:
    """Enrollment from precomputed unit embeddings.

    The center is the plain mean of the genuine embeddings (not
    re-normalized); distances are Euclidean to that center.
    """
    gen_emb = np.atleast_2d(np.asarray(gen_emb, dtype=np.float64))
    imp_emb = np.atleast_2d(np.asarray(imp_emb, dtype=np.float64))
    if len(gen_emb) < 2:
        raise ValueError("enrollment needs at least two genuine windows")
    center = gen_emb.mean(axis=0)
    d_gen = np.linalg.norm(gen_emb - center, axis=1)
    d_imp = np.linalg.norm(imp_emb - center, axis=1)
    tau, _, _ = eer_threshold(d_gen, d_imp, grid_points)
    return AuthProfile(center=center, tau=tau, m=len(gen_emb),
                       d_gen=d_gen, d_imp=d_imp, created_at=_now())


def register(genuine, impostor, pipeline: AuthPipeline,
             grid_points: int = 1000) -> AuthProfile:
    """Enroll a wearer from raw streams.

    ``genuine`` is the wearer's enrollment stream (around six minutes
    in the reference protocol); ``impostor`` is a stream, or list of
    streams, from other people (around one minute total).  Both are cut
    into the pipeline's windows and embedded identically.
    """
    gen_emb = pipeline.embed_stream(genuine)
    if isinstance(impostor, (list, tuple)):
        imp_emb = np.concatenate([pipeline.embed_stream(s) for s in impostor])
    else:
        imp_emb = pipeline.embed_stream(impostor)
    return register_embeddings(gen_emb, imp_emb, grid_points)


def authenticate_embeddings(query_emb: np.ndarray,
                            profile: AuthProfile) -> tuple[bool, float]:
    query_emb = np.atleast_2d(np.asarray(query_emb, dtype=np.float64))
    d = float(np.linalg.norm(query_emb - profile.center, axis=1).mean())
    return bool(d < profile.tau), d


def authenticate(query, profile: AuthProfile,
                 pipeline: AuthPipeline) -> tuple[bool, float]:
    """Accept when the query windows' mean center distance is under tau."""
    return authenticate_embeddings(pipeline.embed_stream(query), profile)


def update_template(profile: AuthProfile, embeddings: np.ndarray,
                    distances: np.ndarray) -> AuthProfile:
    """Fold high-confidence accepted queries into the enrollment center.

    Every entry must satisfy distance < tau/2 (measured at acceptance
    time); otherwise the whole update is refused, since folding in a
    borderline query would let an impostor walk the template. The
    center extends as a running mean, the new embeddings' distances to
    the updated center join the genuine set, the impostor distances
    stay frozen, and the threshold is re-derived. An empty update
    changes nothing but still logs.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64).reshape(-1,
                                                                  profile.center.size)
    distances = np.asarray(distances, dtype=np.float64).reshape(-1)
    if len(embeddings) != len(distances):
        raise ValueError("one distance per embedding required")
    log = list(profile.update_log)
    if len(embeddings) == 0:
        log.append({"time": _now(), "added": 0,
                    "tau_before": float(profile.tau),
                    "tau_after": float(profile.tau)})
        return AuthProfile(center=profile.center.copy(), tau=profile.tau,
                           m=profile.m, d_gen=profile.d_gen.copy(),
                           d_imp=profile.d_imp.copy(),
                           created_at=profile.created_at, update_log=log)
    half = profile.tau / 2.0
    if np.any(distances >= half):
        worst = float(distances.max())
        raise ValueError(
            f"confidence violation: update requires every distance < tau/2 "
            f"({half:.6g}), worst entry {worst:.6g}")
    k = len(embeddings)
    center = (profile.m * profile.center + embeddings.sum(axis=0)) / (profile.m + k)
    d_new = np.linalg.norm(embeddings - center, axis=1)
    d_gen = np.concatenate([profile.d_gen, d_new])
    tau, _, _ = eer_threshold(d_gen, profile.d_imp)
    log.append({"time": _now(), "added": int(k),
                "tau_before": float(profile.tau), "tau_after": float(tau)})
    return AuthProfile(center=center, tau=tau, m=profile.m + k,
                       d_gen=d_gen, d_imp=profile.d_imp.copy(),
                       created_at=profile.created_at, update_log=log)


def save_profile(path, profile: AuthProfile) -> None:
    Path(path).write_text(json.dumps(profile.to_dict(), indent=2) + "\n")


def load_profile(path) -> AuthProfile:
    return AuthProfile.from_dict(json.loads(Path(path).read_text()))
