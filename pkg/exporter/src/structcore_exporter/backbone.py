"""Backbone adapters: frozen DINOv2 ViT-B/14 plus a deterministic stub.

Every backbone exposes `patch_size`, `num_layers`, `embed_dim`, and
`tokens(images, layer_ids) -> list of (B, P, d) float32 tensors` with the
CLS token already excluded and patches in row-major grid order. Layer ids
are negative block offsets (-1 = last block).
"""

from __future__ import annotations

import numpy as np
import torch


def _resolve_indices(layer_ids, num_layers):
    idx = []
    for lid in layer_ids:
        j = num_layers + lid if lid < 0 else lid
        if not 0 <= j < num_layers:
            raise ValueError(f"layer id {lid} out of range for depth {num_layers}")
        idx.append(j)
    return idx


class DinoV2Backbone:
    """Wraps a torch.hub DINOv2 model. Weights download on first use."""

    def __init__(self, model):
        self.model = model.eval()
        self.patch_size = int(model.patch_size)
        self.num_layers = len(model.blocks)
        self.embed_dim = int(model.embed_dim)

    @torch.no_grad()
    def tokens(self, images, layer_ids):
        idx = _resolve_indices(layer_ids, self.num_layers)
        # raw block outputs (norm=False): l2 normalization happens downstream
        outs = self.model.get_intermediate_layers(
            images, n=idx, reshape=False, return_class_token=False, norm=False
        )
        return [o.float() for o in outs]


class StubBackbone:
    """Deterministic offline stand-in with the real interface.

    Tokens are mean-pooled image patches pushed through fixed seeded
    per-layer projections; row-major patch order matches torch unfold.
    """

    def __init__(self, patch_size=14, embed_dim=32, num_layers=12, seed=0):
        self.patch_size = patch_size
        self.embed_dim = embed_dim
        self.num_layers = num_layers
        self._proj = {}
        self._seed = seed

    def _layer_proj(self, idx):
        if idx not in self._proj:
            rng = np.random.default_rng(self._seed + 1000 + idx)
            w = rng.standard_normal((3, self.embed_dim)).astype(np.float32)
            self._proj[idx] = torch.from_numpy(w)
        return self._proj[idx]

    @torch.no_grad()
    def tokens(self, images, layer_ids):
        idx = _resolve_indices(layer_ids, self.num_layers)
        b, c, h, w = images.shape
        ps = self.patch_size
        if h % ps or w % ps:
            raise ValueError(f"input {h}x{w} not divisible by patch size {ps}")
        # (B, C, gh, ps, gw, ps) -> mean over pixels -> (B, P, C) row-major
        patches = images.reshape(b, c, h // ps, ps, w // ps, ps)
        pooled = patches.mean(dim=(3, 5)).permute(0, 2, 3, 1).reshape(b, -1, c)
        return [pooled @ self._layer_proj(j) for j in idx]


def load_backbone(name: str, device: str = "cpu"):
    """Backbone registry: 'stub' for offline tests, else a torch.hub name."""
    if name == "stub":
        return StubBackbone()
    try:
        model = torch.hub.load("facebookresearch/dinov2", name)
    except Exception as exc:
        raise RuntimeError(
            f"could not load backbone {name!r} via torch.hub (weights need "
            f"network access on first use): {exc}"
        ) from exc
    return DinoV2Backbone(model.to(device))
