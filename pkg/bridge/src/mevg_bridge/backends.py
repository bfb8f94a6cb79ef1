"""Model backends the server dispatches to.

`ToyGaussianBackend` is self-contained and deterministic; it gives every
integration test a real server to talk to without weights on disk.  The toy
predictor is the exact posterior-mean denoiser for unit-variance Gaussian
frame priors whose means are hashed from the prompt, so a driving engine sees
well-behaved noise predictions, not canned responses.

`WeightsBackend` adapts a locally downloaded diffusers text-to-video
pipeline.  All heavy imports happen at load time and every failure is mapped
to `BackendError`, which the server turns into a structured error frame.
"""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod

import numpy as np

from .metrics import mean_consecutive_similarity, text_alignment_score

VAE_FACTOR = 8


class BackendError(RuntimeError):
    """Backend cannot satisfy the request (bad shapes, missing weights, OOM)."""


class Backend(ABC):
    """Operations a served model must answer."""

    name: str

    @abstractmethod
    def capabilities(self) -> dict:
        """Dims and supported ops, reported through the hello handshake."""

    @abstractmethod
    def predict(self, x: np.ndarray, t: int, prompt: str) -> np.ndarray:
        """Predicted noise for latents x (frames, c, h, w) at training step t."""

    @abstractmethod
    def encode_image(self, image: np.ndarray) -> np.ndarray:
        """RGB image (3, H, W) in [0, 1] to one frame latent (c, h, w)."""

    @abstractmethod
    def decode(self, latent: np.ndarray) -> np.ndarray:
        """Clip latent (frames, c, h, w) to RGB frames (frames, 3, H, W) in [0, 1]."""

    @abstractmethod
    def clip_text(self, frames: np.ndarray, prompt: str) -> float:
        """Alignment score between decoded frames and a prompt."""

    @abstractmethod
    def clip_image(self, frames: np.ndarray) -> float:
        """Mean similarity of consecutive frames."""


OPS = ("hello", "predict", "encode_image", "decode", "clip_text", "clip_image", "bye")


class ToyGaussianBackend(Backend):
    """Deterministic stand-in model with analytic noise predictions.

    Frames are modelled i.i.d. as x0 ~ N(mu_prompt, I) with mu_prompt drawn
    from a hash of the prompt, which makes the optimal prediction

        eps_hat = sqrt(1 - abar_t) (x_t - sqrt(abar_t) mu_prompt)

    under the same linear beta schedule the engine defaults to.  encode/decode
    are a fixed channel mix plus 8x average pooling and nearest upsampling, so
    image round trips are smooth but lossy, as with a real VAE.
    """

    name = "toy-gaussian"

    def __init__(
        self,
        frame_shape: tuple[int, int, int] = (4, 32, 32),
        frames: int = 16,
        num_train_steps: int = 1000,
        beta_start: float = 1e-4,
        beta_end: float = 0.02,
    ):
        frame_shape = tuple(int(d) for d in frame_shape)
        if len(frame_shape) != 3 or any(d < 1 for d in frame_shape):
            raise BackendError(f"frame_shape must be three positive dims, got {frame_shape}")
        if frames < 1 or num_train_steps < 1:
            raise BackendError("frames and num_train_steps must be >= 1")
        self.frame_shape = frame_shape
        self.frames = int(frames)
        self.num_train_steps = int(num_train_steps)
        betas = np.linspace(beta_start, beta_end, num_train_steps, dtype=np.float64)
        self._alpha_bar = np.cumprod(1.0 - betas)
        self._means: dict[str, np.ndarray] = {}
        c = frame_shape[0]
        rng = np.random.default_rng(int.from_bytes(hashlib.sha256(b"toy:vae").digest()[:8], "little"))
        self._lift = rng.standard_normal((c, 3)) / np.sqrt(3.0)
        self._drop = np.linalg.pinv(self._lift)

    def capabilities(self) -> dict:
        c, h, w = self.frame_shape
        return {
            "backend": self.name,
            "frame_shape": list(self.frame_shape),
            "frames": self.frames,
            "num_train_steps": self.num_train_steps,
            "image_size": [3, VAE_FACTOR * h, VAE_FACTOR * w],
            "ops": list(OPS),
        }

    def _mean_for(self, prompt: str) -> np.ndarray:
        cached = self._means.get(prompt)
        if cached is None:
            digest = hashlib.sha256(f"toy:{prompt}".encode()).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            cached = self._means[prompt] = rng.standard_normal(self.frame_shape)
        return cached

    def predict(self, x: np.ndarray, t: int, prompt: str) -> np.ndarray:
        if x.ndim != 4 or x.shape[1:] != self.frame_shape:
            raise BackendError(f"latents {x.shape} do not match frame shape {self.frame_shape}")
        if not 0 <= int(t) < self.num_train_steps:
            raise BackendError(f"t must lie in [0, {self.num_train_steps}), got {t}")
        abar = self._alpha_bar[int(t)]
        mu = self._mean_for(prompt)[None]
        eps = (1.0 - abar) ** 0.5 * (x - abar**0.5 * mu)
        return eps.astype(np.float32)

    def encode_image(self, image: np.ndarray) -> np.ndarray:
        c, h, w = self.frame_shape
        want = (3, VAE_FACTOR * h, VAE_FACTOR * w)
        if image.shape != want:
            raise BackendError(f"image shape {image.shape} does not match {want}")
        pooled = image.reshape(3, h, VAE_FACTOR, w, VAE_FACTOR).mean(axis=(2, 4))
        latent = np.einsum("kc,chw->khw", self._lift, 2.0 * pooled - 1.0)
        return latent.astype(np.float32)

    def decode(self, latent: np.ndarray) -> np.ndarray:
        if latent.ndim != 4 or latent.shape[1:] != self.frame_shape:
            raise BackendError(f"latents {latent.shape} do not match frame shape {self.frame_shape}")
        mixed = np.einsum("ck,fkhw->fchw", self._drop, latent)
        frames = np.clip(0.5 * (mixed + 1.0), 0.0, 1.0)
        frames = np.repeat(np.repeat(frames, VAE_FACTOR, axis=2), VAE_FACTOR, axis=3)
        return frames.astype(np.float32)

    def clip_text(self, frames: np.ndarray, prompt: str) -> float:
        if frames.ndim != 4 or frames.shape[1:] != self.frame_shape:
            raise BackendError(f"frames {frames.shape} do not match frame shape {self.frame_shape}")
        return text_alignment_score(frames, self._mean_for(prompt))

    def clip_image(self, frames: np.ndarray) -> float:
        if frames.ndim < 2 or frames.shape[0] < 2:
            raise BackendError(f"clip_image needs at least two frames, got {frames.shape}")
        return mean_consecutive_similarity(frames)


class WeightsBackend(Backend):
    """Adapter for a locally downloaded diffusers text-to-video pipeline.

    Expects the layout used by diffusers video pipelines: a UNet taking
    samples shaped (batch, channels, frames, height, width) with text
    conditioning via encoder_hidden_states, plus a VAE and a CLIP model for
    the metric ops.  Everything loads lazily on first use; missing packages
    or weights surface as BackendError, never as an import crash at server
    start.
    """

    name = "weights"

    def __init__(self, model_path: str, device: str = "cpu", frames: int = 16):
        self.model_path = model_path
        self.device = device
        self.frames = int(frames)
        self._pipe = None
        self._clip = None

    def _load(self):
        if self._pipe is not None:
            return self._pipe
        try:
            import torch
            from diffusers import DiffusionPipeline
        except ImportError as exc:
            raise BackendError(
                "the weights backend needs torch and diffusers; "
                "install with pip install 'mevg-bridge[weights]'"
            ) from exc
        try:
            pipe = DiffusionPipeline.from_pretrained(self.model_path, torch_dtype=torch.float32)
        except Exception as exc:
            raise BackendError(f"cannot load weights from {self.model_path}: {exc}") from exc
        for part in ("unet", "vae", "text_encoder", "tokenizer"):
            if getattr(pipe, part, None) is None:
                raise BackendError(f"pipeline at {self.model_path} lacks a {part}")
        pipe.to(self.device)
        self._torch = torch
        self._pipe = pipe
        unet = pipe.unet.config
        vae = pipe.vae.config
        factor = 2 ** (len(vae.block_out_channels) - 1)
        size = unet.sample_size * factor
        self.frame_shape = (unet.in_channels, unet.sample_size, unet.sample_size)
        self.image_size = (3, size, size)
        self.num_train_steps = pipe.scheduler.config.num_train_timesteps
        self.vae_scaling = getattr(vae, "scaling_factor", 0.18215)
        return pipe

    def _load_clip(self):
        if self._clip is not None:
            return self._clip
        try:
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise BackendError(
                "the metric ops need transformers; install with pip install 'mevg-bridge[weights]'"
            ) from exc
        try:
            model = CLIPModel.from_pretrained("openai/clip-vit-base-patch32").to(self.device)
            proc = CLIPProcessor.from_pretrained("openai/clip-vit-base-patch32")
        except Exception as exc:
            raise BackendError(f"cannot load the CLIP scorer: {exc}") from exc
        self._clip = (model, proc)
        return self._clip

    def capabilities(self) -> dict:
        self._load()
        return {
            "backend": self.name,
            "model_path": self.model_path,
            "frame_shape": list(self.frame_shape),
            "frames": self.frames,
            "num_train_steps": int(self.num_train_steps),
            "image_size": list(self.image_size),
            "ops": list(OPS),
        }

    def _embed_prompt(self, prompt: str):
        pipe, torch = self._pipe, self._torch
        tokens = pipe.tokenizer(
            prompt, padding="max_length", max_length=pipe.tokenizer.model_max_length,
            truncation=True, return_tensors="pt",
        ).to(self.device)
        with torch.no_grad():
            return pipe.text_encoder(tokens.input_ids)[0]

    def predict(self, x: np.ndarray, t: int, prompt: str) -> np.ndarray:
        pipe = self._load()
        torch = self._torch
        if x.ndim != 4 or x.shape[1:] != self.frame_shape:
            raise BackendError(f"latents {x.shape} do not match frame shape {self.frame_shape}")
        # engine layout (frames, c, h, w) -> unet layout (1, c, frames, h, w)
        sample = torch.from_numpy(np.ascontiguousarray(x)).permute(1, 0, 2, 3)[None].to(self.device)
        emb = self._embed_prompt(prompt)
        try:
            with torch.no_grad():
                out = pipe.unet(sample, int(t), encoder_hidden_states=emb).sample
        except torch.cuda.OutOfMemoryError as exc:
            raise BackendError(f"model out of memory: {exc}") from exc
        return out[0].permute(1, 0, 2, 3).cpu().numpy().astype(np.float32)

    def encode_image(self, image: np.ndarray) -> np.ndarray:
        pipe = self._load()
        torch = self._torch
        if image.shape != self.image_size:
            raise BackendError(f"image shape {image.shape} does not match {self.image_size}")
        pixels = torch.from_numpy(np.ascontiguousarray(image))[None].to(self.device) * 2.0 - 1.0
        with torch.no_grad():
            latent = pipe.vae.encode(pixels).latent_dist.mode() * self.vae_scaling
        return latent[0].cpu().numpy().astype(np.float32)

    def decode(self, latent: np.ndarray) -> np.ndarray:
        pipe = self._load()
        torch = self._torch
        if latent.ndim != 4 or latent.shape[1:] != self.frame_shape:
            raise BackendError(f"latents {latent.shape} do not match frame shape {self.frame_shape}")
        batch = torch.from_numpy(np.ascontiguousarray(latent)).to(self.device) / self.vae_scaling
        with torch.no_grad():
            frames = pipe.vae.decode(batch).sample
        frames = ((frames + 1.0) / 2.0).clamp(0.0, 1.0)
        return frames.cpu().numpy().astype(np.float32)

    def _frame_embeddings(self, frames: np.ndarray):
        model, proc = self._load_clip()
        torch = self._torch
        images = [np.transpose(f, (1, 2, 0)) for f in frames]
        inputs = proc(images=images, return_tensors="pt", do_rescale=False).to(self.device)
        with torch.no_grad():
            emb = model.get_image_features(**inputs)
        return emb / emb.norm(dim=-1, keepdim=True)

    def clip_text(self, frames: np.ndarray, prompt: str) -> float:
        model, proc = self._load_clip()
        torch = self._torch
        if frames.ndim != 4 or frames.shape[1] != 3:
            raise BackendError(f"clip_text expects RGB frames, got {frames.shape}")
        emb = self._frame_embeddings(frames)
        tokens = proc(text=[prompt], return_tensors="pt", padding=True).to(self.device)
        with torch.no_grad():
            text = model.get_text_features(**tokens)
        text = text / text.norm(dim=-1, keepdim=True)
        return float((emb @ text.T).mean().item())

    def clip_image(self, frames: np.ndarray) -> float:
        if frames.ndim != 4 or frames.shape[0] < 2 or frames.shape[1] != 3:
            raise BackendError(f"clip_image expects >= 2 RGB frames, got {frames.shape}")
        emb = self._frame_embeddings(frames).cpu().numpy()
        return float(np.mean(np.sum(emb[:-1] * emb[1:], axis=-1)))
