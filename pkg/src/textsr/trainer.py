"""Training loops: encoder pretraining and the two-branch SR training run.

Both entry points are deterministic for a fixed config: seeding covers module
initialization and batch sampling, and all data flows in serial order, so two
runs with the same seed produce byte-identical checkpoints and log streams.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import corpus as corpus_mod
from .adversarial import Discriminator, d_loss, g_adv_loss
from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig, from_mapping
from .errors import ConfigurationError, TrainingError
from .generator import GeneratorConfig, SRGenerator, to_image
from .matching import RegionEncoder, r_precision, tic_loss, tim_score
from .objective import build_report, fine_loss, global_loss, total_loss
from .text import TextEncoder, Vocabulary, build_vocab, encode_batch, tokenize


# ---------------------------------------------------------------------------
# module state helpers


def module_tensors(prefix: str, module: torch.nn.Module) -> dict:
    """state_dict as prefixed float32 numpy arrays for checkpointing."""
    out = {}
    for name, value in module.state_dict().items():
        out[f"{prefix}.{name}"] = value.detach().cpu().numpy().astype(np.float32)
    return out


def load_module(module: torch.nn.Module, tensors: dict, prefix: str) -> None:
    head = prefix + "."
    state = {}
    for name, value in tensors.items():
        if name.startswith(head):
            state[name[len(head):]] = torch.as_tensor(value)
    if not state:
        raise ConfigurationError(f"checkpoint holds no tensors under prefix {prefix!r}")
    try:
        module.load_state_dict(state)
    except RuntimeError as exc:
        raise ConfigurationError(f"checkpoint incompatible with module {prefix!r}: {exc}")


def state_checksum(*modules: torch.nn.Module) -> str:
    """sha256 over all parameter and buffer bytes, iterated in sorted name order."""
    digest = hashlib.sha256()
    for module in modules:
        state = module.state_dict()
        for name in sorted(state):
            digest.update(name.encode())
            digest.update(state[name].detach().cpu().numpy().astype(np.float32).tobytes())
    return digest.hexdigest()


def _freeze(module: torch.nn.Module) -> torch.nn.Module:
    module.eval()
    for p in module.parameters():
        p.requires_grad_(False)
    return module


# ---------------------------------------------------------------------------
# data feeding


class BatchSource:
    """Seeded batch sampler over one manifest split with an in-memory cache.

    Records are decoded once and reused; sampling uses a private RNG so the
    sequence of batches is a pure function of (manifest, split, seed).
    """

    def __init__(self, manifest, split: str, scale: int, seed: int):
        self.manifest = manifest
        self.split = split
        self.scale = scale
        self.ids = manifest.ids(split)
        if not self.ids:
            raise ConfigurationError(f"manifest split {split!r} is empty")
        self.rng = np.random.default_rng(seed)
        self._cache: dict = {}

    def _load(self, record_id):
        if record_id not in self._cache:
            batch = corpus_mod.load_batch(self.manifest, [record_id], scale=self.scale)
            self._cache[record_id] = (batch.lr[0], batch.gt[0], batch.gt_low[0],
                                      batch.captions[0])
        return self._cache[record_id]

    def sample(self, batch_size: int):
        """Draw a batch without replacement; returns torch tensors + captions."""
        count = min(batch_size, len(self.ids))
        picks = self.rng.permutation(len(self.ids))[:count]
        lr, gt, low, captions = [], [], [], []
        for k in picks:
            a, b, c, cap = self._load(self.ids[int(k)])
            lr.append(a)
            gt.append(b)
            low.append(c)
            captions.append(cap)
        return (
            torch.as_tensor(np.stack(lr)),
            torch.as_tensor(np.stack(gt)),
            torch.as_tensor(np.stack(low)),
            captions,
        )


def _adam(params, train) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=train.lr, betas=(train.beta1, train.beta2),
                            eps=train.eps)


def _dump_diagnostics(work: Path, stage: str, step: int, values: dict) -> Path:
    path = work / "logs" / f"{stage}_failure.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump({"stage": stage, "step": step, "values": values}, fh, indent=2,
                  sort_keys=True)
    return path


# ---------------------------------------------------------------------------
# encoder pretraining


def pretrain_encoders(config: TrainConfig, manifest) -> Path:
    """Train the text and region encoders with the matching loss.

    Returns the checkpoint directory. The saved encoders are marked frozen:
    the SR stage loads them read-only and never updates them.
    """
    config.validate()
    work = config.work_dir
    (work / "logs").mkdir(parents=True, exist_ok=True)
    torch.manual_seed(config.train.seed)

    captions = [r["captions"][0] for r in manifest.split("train")]
    vocab = build_vocab(captions, min_count=config.train.min_count)
    text_encoder = TextEncoder(len(vocab), config.model.word_dim)
    region_encoder = RegionEncoder(config.model.word_dim)
    params = list(text_encoder.parameters()) + list(region_encoder.parameters())
    opt = _adam(params, config.train)
    source = BatchSource(manifest, "train", config.model.scale, config.train.seed)
    lo = config.loss

    log_path = work / "logs" / "pretrain_log.jsonl"
    with open(log_path, "w") as log:
        for step in range(1, config.train.pretrain_steps + 1):
            _, gt, _, caps = source.sample(config.train.batch_size)
            words, _, lengths = encode_batch(text_encoder, caps, vocab,
                                             config.model.t_max)
            regions = region_encoder.grid_regions(gt)
            posterior = tic_loss(words, regions, lengths, gamma1=lo.gamma1,
                                 gamma2=lo.gamma2, gamma3=lo.gamma3)
            value = float(posterior.loss.detach())
            if not np.isfinite(value):
                dump = _dump_diagnostics(work, "pretrain", step, {"tic": value})
                raise TrainingError(
                    f"non-finite matching loss at step {step}; diagnostics at {dump}")
            opt.zero_grad()
            posterior.loss.backward()
            opt.step()
            log.write(json.dumps({"step": step, "tic": value}) + "\n")

    path = work / "encoders"
    tensors = {}
    tensors.update(module_tensors("text_encoder", text_encoder))
    tensors.update(module_tensors("region_encoder", region_encoder))
    save_checkpoint(tensors, {
        "kind": "encoders",
        "step": config.train.pretrain_steps,
        "frozen": True,
        "input_range": [0.0, 1.0],
        "config": config.as_dict(),
        "vocab": vocab.to_json(),
    }, path)
    return path


def encoder_r_precision(text_encoder, region_encoder, vocab, manifest, config: TrainConfig,
                        split: str = "test", limit: int | None = None,
                        seed: int = 0) -> float:
    """Retrieval precision of the encoder pair over a manifest split."""
    ids = manifest.ids(split)
    if limit is not None:
        ids = ids[:limit]
    pairs = []
    for record_id in ids:
        record = manifest.by_id(record_id)
        image = corpus_mod.load_image(manifest.root / record["image"])
        pairs.append((image, record["captions"][0]))

    def score(image, caption):
        return tim_score(image, caption, vocab, text_encoder, region_encoder,
                         gamma1=config.loss.gamma1, gamma2=config.loss.gamma2,
                         t_max=config.model.t_max)

    return r_precision(pairs, score, distractors=config.train.distractors, seed=seed)


# ---------------------------------------------------------------------------
# SR training


def load_encoders(config: TrainConfig, encoder_ckpt):
    """Load a pretrained encoder checkpoint; returns (vocab, text, region) frozen."""
    path = Path(encoder_ckpt)
    if not path.exists():
        raise ConfigurationError(f"encoder checkpoint not found: {path}")
    ck = load_checkpoint(path)
    vocab = Vocabulary.from_json(ck.vocab_json)
    text_encoder = TextEncoder(len(vocab), config.model.word_dim)
    region_encoder = RegionEncoder(config.model.word_dim)
    load_module(text_encoder, ck.tensors, "text_encoder")
    load_module(region_encoder, ck.tensors, "region_encoder")
    return vocab, _freeze(text_encoder), _freeze(region_encoder)


def _save_bundle(path: Path, step: int, config: TrainConfig, vocab,
                 text_encoder, region_encoder, generator, discriminator) -> Path:
    tensors = {}
    tensors.update(module_tensors("text_encoder", text_encoder))
    tensors.update(module_tensors("region_encoder", region_encoder))
    tensors.update(module_tensors("generator", generator))
    if discriminator is not None:
        tensors.update(module_tensors("discriminator", discriminator))
    return save_checkpoint(tensors, {
        "kind": "model",
        "step": step,
        "input_range": [0.0, 1.0],
        "attention_parameters": "per_stage",
        "config": config.as_dict(),
        "vocab": vocab.to_json(),
    }, path)


def _nearest_upscale(image: np.ndarray, factor: int) -> np.ndarray:
    return np.repeat(np.repeat(image, factor, axis=1), factor, axis=2)


def _attention_panel(m_attn: torch.Tensor, length: int, size: int) -> np.ndarray:
    """Top word map (by spatial mass) as a grayscale RGB panel."""
    maps = m_attn[:length]
    if maps.numel() == 0:
        return np.zeros((3, size, size), dtype=np.float32)
    sums = maps.sum(dim=(1, 2))
    top = maps[int(torch.argmax(sums))]
    if top.shape[-1] != size:
        top = torch.nn.functional.interpolate(
            top[None, None], size=(size, size), mode="bilinear", align_corners=False)[0, 0]
    top = top.numpy()
    lo, hi = float(top.min()), float(top.max())
    if hi - lo > 1e-12:
        top = (top - lo) / (hi - lo)
    else:
        top = np.zeros_like(top)
    return np.repeat(top[None].astype(np.float32), 3, axis=0)


def _write_sample_grid(path: Path, scale: int, lr, coarse, fine, gt,
                       tam=None, lengths=None, max_items: int = 4) -> None:
    """One row per item: LR (nearest-upscaled) | coarse | fine | GT | attention."""
    count = min(max_items, lr.shape[0])
    size = gt.shape[-1]
    rows = []
    for i in range(count):
        panels = [
            _nearest_upscale(lr[i].numpy(), scale),
            to_image(coarse[i]),
            to_image(fine[i]),
            gt[i].numpy(),
        ]
        if tam is not None:
            panels.append(_attention_panel(tam[i], int(lengths[i]), size))
        rows.append(np.concatenate(panels, axis=2))
    grid = np.concatenate(rows, axis=1)
    path.parent.mkdir(parents=True, exist_ok=True)
    corpus_mod.save_image(np.clip(grid, 0.0, 1.0), path)


def train_tgsr(config: TrainConfig, manifest, encoder_ckpt) -> Path:
    """Train the SR generator (and discriminator) against frozen encoders.

    Alternates one discriminator step and one generator step per batch when the
    adversarial term is enabled. Encoder weights never receive gradients; their
    checksum is verified at the end of the run. A non-finite loss aborts with
    the most recent saved checkpoint left on disk.
    """
    config.validate()
    work = config.work_dir
    (work / "logs").mkdir(parents=True, exist_ok=True)
    torch.manual_seed(config.train.seed)

    vocab, text_encoder, region_encoder = load_encoders(config, encoder_ckpt)
    encoder_sum = state_checksum(text_encoder, region_encoder)

    flags = config.flags
    generator = SRGenerator(GeneratorConfig(
        scale=config.model.scale,
        channels=config.model.channels,
        res_blocks=config.model.res_blocks,
        word_dim=config.model.word_dim,
        t_max=config.model.t_max,
        use_tam=flags.use_tam,
        use_refine=flags.use_refine,
    ))
    discriminator = None
    d_opt = None
    if flags.use_cgan:
        discriminator = Discriminator(config.model.image_size, config.model.channels,
                                      config.model.word_dim)
        d_opt = _adam(discriminator.parameters(), config.train)
    g_opt = _adam(generator.parameters(), config.train)

    weights = config.weights()
    lo = config.loss
    source = BatchSource(manifest, "train", config.model.scale, config.train.seed)

    def save(name: str, step: int) -> Path:
        return _save_bundle(work / name, step, config, vocab, text_encoder,
                            region_encoder, generator, discriminator)

    last_good = save("model_init", 0)
    log_path = work / "logs" / "train_log.jsonl"
    with open(log_path, "w") as log:
        for step in range(1, config.train.steps + 1):
            lr, gt, gt_low, caps = source.sample(config.train.batch_size)
            with torch.no_grad():
                words, sentences, lengths = encode_batch(text_encoder, caps, vocab,
                                                         config.model.t_max)
            out = generator(lr, words if flags.use_tam else None, lengths)

            if flags.use_cgan:
                real_logits = discriminator(gt, sentences)
                if flags.use_refine:
                    fake_images = torch.cat([out.coarse.detach(), out.fine.detach()])
                    fake_sentences = torch.cat([sentences, sentences])
                else:
                    fake_images = out.coarse.detach()
                    fake_sentences = sentences
                fake_logits = discriminator(fake_images, fake_sentences)
                mism_logits = discriminator(gt, sentences.roll(1, dims=0))
                d_total = d_loss(real_logits, fake_logits, mism_logits,
                                 mismatch_weight=lo.mismatch_weight)
                if not np.isfinite(float(d_total.detach())):
                    dump = _dump_diagnostics(work, "train", step,
                                             {"d_total": float(d_total)})
                    raise TrainingError(
                        f"non-finite discriminator loss at step {step}; last good "
                        f"checkpoint at {last_good}; diagnostics at {dump}")
                d_opt.zero_grad()
                d_total.backward()
                d_opt.step()

            cgan_g = g_adv_loss(discriminator(out.coarse, sentences)) if flags.use_cgan else None
            tic_g = None
            if flags.use_tic:
                tic_g = tic_loss(words, region_encoder.grid_regions(out.coarse), lengths,
                                 gamma1=lo.gamma1, gamma2=lo.gamma2, gamma3=lo.gamma3).loss
            target = gt_low if flags.use_refine else gt
            g_total, g_parts = global_loss(out.coarse, target, weights, cgan_g, tic_g)

            if flags.use_refine:
                m_attn = out.tam_outputs[-1].m_attn if flags.use_tar else None
                cgan_f = g_adv_loss(discriminator(out.fine, sentences)) if flags.use_cgan else None
                tic_f = None
                if flags.use_tic:
                    tic_f = tic_loss(words, region_encoder.grid_regions(out.fine), lengths,
                                     gamma1=lo.gamma1, gamma2=lo.gamma2, gamma3=lo.gamma3).loss
                f_total, f_parts = fine_loss(out.fine, gt, weights, m_attn, lengths,
                                             cgan_f, tic_f)
            else:
                f_total = out.coarse.new_zeros(())
                zero = out.coarse.new_zeros(())
                f_parts = {"tar": zero, "cgan_f": zero, "tic_f": zero}

            loss = total_loss(g_total, f_total)
            report = build_report(step, g_total, g_parts, f_total, f_parts)
            if not np.isfinite(report.total):
                dump = _dump_diagnostics(work, "train", step, report.as_row())
                raise TrainingError(
                    f"non-finite loss at step {step}; last good checkpoint at "
                    f"{last_good}; diagnostics at {dump}")
            g_opt.zero_grad()
            loss.backward()
            g_opt.step()
            log.write(json.dumps(report.as_row()) + "\n")

            if step % config.train.sample_every == 0:
                with torch.no_grad():
                    preview = generator(lr, words if flags.use_tam else None, lengths)
                tam = preview.tam_outputs[-1].m_attn if flags.use_tam else None
                _write_sample_grid(work / "samples" / f"step_{step:06d}.png",
                                   config.model.scale, lr, preview.coarse, preview.fine,
                                   gt, tam, lengths)
                last_good = save(f"model_step_{step:06d}", step)

    if state_checksum(text_encoder, region_encoder) != encoder_sum:
        raise TrainingError("encoder weights changed during SR training")
    return save("model", config.train.steps)


# ---------------------------------------------------------------------------
# inference bundle


@dataclass
class SRResult:
    coarse: np.ndarray      # (3, H, W) float32 in [0, 1]
    fine: np.ndarray        # (3, H, W) float32 in [0, 1]
    words: list             # caption tokens that drove attention
    attention: np.ndarray | None  # (len(words), H, W) raw final-stage maps


class ModelBundle:
    """Everything needed to super-resolve one image from one caption."""

    def __init__(self, config: TrainConfig, vocab, text_encoder, region_encoder,
                 generator, discriminator=None):
        self.config = config
        self.vocab = vocab
        self.text_encoder = _freeze(text_encoder)
        self.region_encoder = _freeze(region_encoder)
        self.generator = generator.eval()
        self.discriminator = discriminator

    def super_resolve(self, lr_image: np.ndarray, caption: str) -> SRResult:
        tokens = tokenize(caption, self.vocab, self.config.model.t_max)
        lr = torch.as_tensor(np.asarray(lr_image, dtype=np.float32)).unsqueeze(0)
        with torch.no_grad():
            use_tam = self.config.flags.use_tam
            words = None
            lengths = [tokens.length]
            if use_tam:
                feats = self.text_encoder.encode(tokens)
                words = feats.words.unsqueeze(0)
            out = self.generator(lr, words, lengths)
            attention = None
            if use_tam and out.tam_outputs:
                maps = out.tam_outputs[-1].m_attn[0, :tokens.length]
                size = out.fine.shape[-1]
                if maps.shape[-1] != size:
                    maps = torch.nn.functional.interpolate(
                        maps.unsqueeze(1), size=(size, size), mode="bilinear",
                        align_corners=False).squeeze(1)
                attention = maps.numpy().astype(np.float32)
        return SRResult(
            coarse=to_image(out.coarse[0]),
            fine=to_image(out.fine[0]),
            words=list(tokens.words),
            attention=attention,
        )

    def tim(self, image: np.ndarray, caption: str) -> float:
        return tim_score(image, caption, self.vocab, self.text_encoder,
                         self.region_encoder, gamma1=self.config.loss.gamma1,
                         gamma2=self.config.loss.gamma2, t_max=self.config.model.t_max)


def load_bundle(path, with_discriminator: bool = False) -> ModelBundle:
    ck = load_checkpoint(path)
    config = from_mapping(ck.config_mapping)
    vocab = Vocabulary.from_json(ck.vocab_json)
    torch.manual_seed(0)
    text_encoder = TextEncoder(len(vocab), config.model.word_dim)
    region_encoder = RegionEncoder(config.model.word_dim)
    generator = SRGenerator(GeneratorConfig(
        scale=config.model.scale,
        channels=config.model.channels,
        res_blocks=config.model.res_blocks,
        word_dim=config.model.word_dim,
        t_max=config.model.t_max,
        use_tam=config.flags.use_tam,
        use_refine=config.flags.use_refine,
    ))
    load_module(text_encoder, ck.tensors, "text_encoder")
    load_module(region_encoder, ck.tensors, "region_encoder")
    load_module(generator, ck.tensors, "generator")
    discriminator = None
    if with_discriminator:
        discriminator = Discriminator(config.model.image_size, config.model.channels,
                                      config.model.word_dim)
        load_module(discriminator, ck.tensors, "discriminator")
    return ModelBundle(config, vocab, text_encoder, region_encoder, generator,
                       discriminator)
