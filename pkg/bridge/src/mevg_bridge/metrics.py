"""Similarity scores served by the clip_text and clip_image ops."""

from __future__ import annotations

import numpy as np


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    va = np.asarray(a, dtype=np.float64).ravel()
    vb = np.asarray(b, dtype=np.float64).ravel()
    denom = np.linalg.norm(va) * np.linalg.norm(vb)
    if denom == 0.0:
        return 0.0
    return float(va @ vb / denom)


def mean_consecutive_similarity(frames: np.ndarray) -> float:
    """Mean cosine similarity of consecutive frames, frames indexed on axis 0.

    Scores temporal coherence: a smoothly evolving clip keeps neighbouring
    frames aligned, so shuffling the frame order drags the score down.
    """
    frames = np.asarray(frames)
    if frames.ndim < 2 or frames.shape[0] < 2:
        raise ValueError(f"need at least two frames, got shape {frames.shape}")
    scores = [cosine_similarity(frames[i], frames[i + 1]) for i in range(frames.shape[0] - 1)]
    return float(np.mean(scores))


def text_alignment_score(frames: np.ndarray, direction: np.ndarray) -> float:
    """Cosine similarity between the mean frame and a text embedding direction."""
    frames = np.asarray(frames)
    if frames.ndim < 2:
        raise ValueError(f"frames must be at least 2-d, got shape {frames.shape}")
    return cosine_similarity(frames.mean(axis=0), direction)
