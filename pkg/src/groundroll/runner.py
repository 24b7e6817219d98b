"""Stage orchestration for the command line.

Each stage reads its inputs through the run manifest, writes its outputs
under the run directory, and records artifact hashes so re-running with
the same configuration and seed is a no-op. Per-stage seeds derive from
the global seed by a fixed counter scheme (SeedSequence([seed, index])),
so any stage can be re-run in isolation and reproduce itself.
"""
from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import __version__
from .detection import (
    TileClassifier,
    fit_log_boundary,
    likelihood_map,
    rough_mask_from_boundary,
    sample_heuristic_tiles,
    train_tile_classifier,
)
from .equalize import TransferMap, apply_equalization, fit_equalization
from .fileio import read_gather, read_mask, write_gather, write_mask
from .filtering import (
    GroundRollFilter,
    filter_pipeline,
    sample_paired_tiles,
    train_cgan,
)
from .gathers import GroundRollMask, ShotGather
from .manifest import RunManifest, config_hash
from .metrics import (
    GatherScores,
    evaluate_gather,
    histograms_csv,
    spectra_csv,
    survey_report,
)
from .pgm import gather_image, likelihood_image, mask_blend_image, write_pgm
from .segmentation import (
    TraceSegmenter,
    make_trace_training_set,
    segment_gather,
    train_trace_unet,
)
from .synthetic import (
    GeologyConfig,
    GroundRollBand,
    Reflection,
    make_survey,
    perturb_reflections,
)

__all__ = [
    "ConfigError",
    "StageError",
    "RunContext",
    "STAGE_ORDER",
    "load_config",
    "make_context",
    "run_stage",
    "run_generalization",
]

REPORT_SCHEMA_VERSION = 1

STAGE_ORDER = [
    "synth",
    "train-detect",
    "fit-mask",
    "train-segment",
    "train-filter",
    "apply",
    "evaluate",
    "report",
]
_STAGE_INDEX = {name: i for i, name in enumerate(STAGE_ORDER)}
_STAGE_INDEX["experiment-generalization"] = len(STAGE_ORDER)


class ConfigError(ValueError):
    """The run configuration violates the schema."""


class StageError(RuntimeError):
    """A stage failed; carries the stage name for error reporting."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


def _section(config: dict, name: str, defaults: dict, required=()) -> dict:
    raw = config.get(name, {})
    if not isinstance(raw, dict):
        raise ConfigError(f"config section '{name}' must be an object")
    unknown = set(raw) - set(defaults) - set(required)
    if unknown:
        raise ConfigError(f"config section '{name}' has unknown keys: {sorted(unknown)}")
    missing = [k for k in required if k not in raw]
    if missing:
        raise ConfigError(f"config section '{name}' is missing keys: {missing}")
    merged = dict(defaults)
    merged.update(raw)
    return merged


_GEO_KEYS = {
    "n_traces", "offset_min_m", "offset_spacing_m", "trace_len_s", "dt_s",
    "noise_rms", "reflections", "groundroll",
}
_GR_KEYS = {
    "f_lo_hz", "f_hi_hz", "v_lo_mps", "v_hi_mps", "amplitude_ratio",
    "max_offset_m", "taper_m", "n_components",
}


def geology_from_dict(d: dict, where: str = "survey.geology") -> GeologyConfig:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(d) - _GEO_KEYS
    if unknown:
        raise ConfigError(f"{where} has unknown keys: {sorted(unknown)}")
    try:
        gr = d["groundroll"]
        unknown_gr = set(gr) - _GR_KEYS
        if unknown_gr:
            raise ConfigError(f"{where}.groundroll has unknown keys: {sorted(unknown_gr)}")
        band = GroundRollBand(**gr)
        events = tuple(Reflection(**ev) for ev in d["reflections"])
        return GeologyConfig(
            n_traces=int(d["n_traces"]),
            reflections=events,
            groundroll=band,
            offset_min_m=float(d.get("offset_min_m", 50.0)),
            offset_spacing_m=float(d.get("offset_spacing_m", 50.0)),
            trace_len_s=float(d.get("trace_len_s", 6.0)),
            dt_s=float(d.get("dt_s", 0.002)),
            noise_rms=float(d.get("noise_rms", 0.0)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"{where}: {err}") from err


def load_config(path) -> dict:
    """Parse and validate a run configuration file."""
    try:
        config = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    if not isinstance(config, dict):
        raise ConfigError("config root must be an object")
    known_top = {"name", "seed", "run_dir", "survey", "equalize", "detect",
                 "segment", "filter", "evaluate", "generalization"}
    unknown = set(config) - known_top
    if unknown:
        raise ConfigError(f"config has unknown top-level keys: {sorted(unknown)}")
    name = config.get("name")
    if not isinstance(name, str) or not name or not all(
            c.isalnum() or c in "-_" for c in name):
        raise ConfigError("config needs a 'name' of [alphanumeric-_] characters")
    survey = _section(config, "survey", {"n_gathers": 15}, required=("geology",))
    if int(survey["n_gathers"]) < 6:
        raise ConfigError("survey.n_gathers must be >= 6 (5 train + >= 1 test)")
    geology_from_dict(survey["geology"])  # validate eagerly
    if "generalization" in config:
        gen = _section(
            config, "generalization",
            {"n_gathers": 6,
             "variant": {"t0_jitter": 0.15, "v_jitter": 0.10, "amp_jitter": 0.20}},
            required=("geology_b",),
        )
        geology_from_dict(gen["geology_b"], "generalization.geology_b")
    # touch every optional section so schema violations surface up front
    for section in ("equalize", "detect", "segment", "filter", "evaluate"):
        _stage_cfg(config, section)
    return config


_STAGE_DEFAULTS = {
    "equalize": {"n_breakpoints": 4096},
    "detect": {"tile_size": 64, "stride": 32, "n_per_class": 40, "n_epochs": 100,
               "batch_size": 64, "lr": 1e-3, "p_thresh": 0.5},
    "segment": {"n_traces_per_gather": 64, "net_len": 2048, "kernel": 17,
                "n_epochs": 100, "batch_size": 16, "lr": 1e-3},
    "filter": {"tile_size": 64, "stride": 32, "n_pairs_per_gather": 64,
               "n_epochs": 40, "batch_size": 4, "lr": 2e-4,
               "gan_weight": 1.0, "l1_weight": 100.0},
    "evaluate": {"band_width": 100, "sep_traces": 16, "n_amp_bins": 64,
                 "freq_max_hz": 60.0, "freq_step_hz": 1.0},
}


def _stage_cfg(config: dict, name: str) -> dict:
    return _section(config, name, _STAGE_DEFAULTS[name])


def stage_seed(global_seed: int, stage: str) -> int:
    """Documented per-stage seed: SeedSequence([global_seed, stage_index])."""
    ss = np.random.SeedSequence([global_seed, _STAGE_INDEX[stage]])
    return int(ss.generate_state(1, np.uint32)[0])


@dataclass
class RunContext:
    config: dict
    seed: int
    run_dir: Path
    manifest: RunManifest
    force: bool = False
    jobs: int = 1
    emit_images: bool = False
    log: callable = print

    @property
    def chash(self) -> str:
        return config_hash(self.config, self.seed)

    def dir(self, *parts) -> Path:
        p = self.run_dir.joinpath(*parts)
        p.mkdir(parents=True, exist_ok=True)
        return p

    def split_ids(self) -> tuple[list[int], list[int]]:
        rec = self.manifest.data["stages"].get("synth")
        if rec is None:
            raise FileNotFoundError("no synthesized data; run the synth stage first")
        extra = rec.get("extra", {})
        return list(extra["train_ids"]), list(extra["test_ids"])

    def gather_path(self, split: str, kind: str, gid: int) -> Path:
        return self.run_dir / "data" / split / f"{kind}_{gid:03d}.sgr"

    def truth_path(self, split: str, gid: int) -> Path:
        return self.run_dir / "data" / split / f"truth_{gid:03d}.sgm"

    def load_transfer_map(self) -> TransferMap:
        p = self.manifest.artifact("train-detect", "transfer_map.json")
        return TransferMap.from_json(p.read_text())

    def load_classifier(self) -> TileClassifier:
        return TileClassifier.load(self.manifest.artifact("train-detect", "tile_classifier.nnw"))

    def load_segmenter(self) -> TraceSegmenter:
        return TraceSegmenter.load(self.manifest.artifact("train-segment", "segmenter.nnw"))

    def load_filter(self) -> GroundRollFilter:
        return GroundRollFilter.load(self.manifest.artifact("train-filter", "cgan.nnw"))


def make_context(config: dict, seed=None, run_dir=None, manifest_path=None,
                 force=False, jobs=1, emit_images=False, log=print,
                 data_root=None) -> RunContext:
    """Resolve the run directory and manifest for a validated config."""
    actual_seed = int(config.get("seed", 0)) if seed is None else int(seed)
    if run_dir is None:
        run_dir = config.get("run_dir")
    if run_dir is None:
        root = Path(data_root) if data_root else Path("runs")
        run_dir = root / config["name"]
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest.load_or_create(run_dir, __version__, path=manifest_path)
    return RunContext(config=config, seed=actual_seed, run_dir=run_dir,
                      manifest=manifest, force=force, jobs=int(jobs),
                      emit_images=emit_images, log=log)


def _parallel(jobs: int, fn, items):
    """Map fn over items, optionally threaded; results in input order."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- stages


def _stage_synth(ctx: RunContext) -> tuple[list[Path], dict]:
    survey_cfg = _section(ctx.config, "survey", {"n_gathers": 15}, required=("geology",))
    geo = geology_from_dict(survey_cfg["geology"])
    n = int(survey_cfg["n_gathers"])
    split = make_survey(geo, n, stage_seed(ctx.seed, "synth"))
    paths = []
    for gid, triple in enumerate(split.gathers):
        part = "train" if gid in split.train_ids else "test"
        d = ctx.dir("data", part)
        for kind, gather in (("noisy", triple.noisy), ("clean", triple.clean)):
            p = d / f"{kind}_{gid:03d}.sgr"
            write_gather(gather, p)
            paths.append(p)
        p = d / f"truth_{gid:03d}.sgm"
        write_mask(triple.truth, p, dt_s=geo.dt_s, gather_id=gid)
        paths.append(p)
    extra = {"train_ids": list(split.train_ids), "test_ids": list(split.test_ids)}
    return paths, extra


def _load_gathers(ctx: RunContext, split: str, kind: str, ids) -> list[ShotGather]:
    return [read_gather(ctx.gather_path(split, kind, gid)) for gid in ids]


def _stage_train_detect(ctx: RunContext) -> tuple[list[Path], dict]:
    cfg_d = _stage_cfg(ctx.config, "detect")
    cfg_e = _stage_cfg(ctx.config, "equalize")
    seed = stage_seed(ctx.seed, "train-detect")
    train_ids, _ = ctx.split_ids()
    noisy = _load_gathers(ctx, "train", "noisy", train_ids)

    tmap = fit_equalization(noisy, n_breakpoints=int(cfg_e["n_breakpoints"]))
    art = ctx.dir("artifacts")
    tmap_path = art / "transfer_map.json"
    tmap_path.write_text(tmap.to_json() + "\n")

    tiles = []
    for g in noisy:
        geq = apply_equalization(g, tmap)
        tiles.extend(sample_heuristic_tiles(
            geq, tile_size=int(cfg_d["tile_size"]),
            n_per_class=int(cfg_d["n_per_class"]), seed=seed))
    ctx.log(f"  training tile classifier on {len(tiles)} tiles")
    clf = train_tile_classifier(
        tiles, n_epochs=int(cfg_d["n_epochs"]), batch_size=int(cfg_d["batch_size"]),
        lr=float(cfg_d["lr"]), seed=seed)
    clf_path = art / "tile_classifier.nnw"
    clf.save(clf_path)

    tele = ctx.dir("telemetry") / "detect_loss.csv"
    tele.write_text("epoch,bce\n" + "".join(
        f"{i},{v:.6f}\n" for i, v in enumerate(clf.loss_history_)))
    return [tmap_path, clf_path, tele], {"n_tiles": len(tiles)}


def _stage_fit_mask(ctx: RunContext) -> tuple[list[Path], dict]:
    cfg_d = _stage_cfg(ctx.config, "detect")
    train_ids, _ = ctx.split_ids()
    tmap = ctx.load_transfer_map()
    clf = ctx.load_classifier()
    masks_dir = ctx.dir("masks")
    paths, boundaries = [], {}
    for gid in train_ids:
        g = read_gather(ctx.gather_path("train", "noisy", gid))
        geq = apply_equalization(g, tmap)
        lmap = likelihood_map(geq, clf, stride=int(cfg_d["stride"]))
        boundary = fit_log_boundary(lmap, geq, p_thresh=float(cfg_d["p_thresh"]))
        rough = rough_mask_from_boundary(boundary, geq)
        p = masks_dir / f"rough_{gid:03d}.sgm"
        write_mask(rough, p, dt_s=g.dt_s, gather_id=gid)
        paths.append(p)
        boundaries[str(gid)] = boundary.to_dict()
        if ctx.emit_images:
            img_dir = ctx.dir("images")
            write_pgm(img_dir / f"likelihood_{gid:03d}.pgm", likelihood_image(lmap.p))
            write_pgm(img_dir / f"rough_mask_{gid:03d}.pgm", mask_blend_image(geq, rough))
    bpath = ctx.dir("artifacts") / "boundaries.json"
    bpath.write_text(json.dumps(boundaries, indent=2, sort_keys=True) + "\n")
    paths.append(bpath)
    return paths, {"boundaries": boundaries}


def _stage_train_segment(ctx: RunContext) -> tuple[list[Path], dict]:
    cfg_s = _stage_cfg(ctx.config, "segment")
    seed = stage_seed(ctx.seed, "train-segment")
    train_ids, _ = ctx.split_ids()
    tmap = ctx.load_transfer_map()
    gathers, masks = [], []
    for gid in train_ids:
        g = read_gather(ctx.gather_path("train", "noisy", gid))
        gathers.append(apply_equalization(g, tmap))
        masks.append(read_mask(ctx.run_dir / "masks" / f"rough_{gid:03d}.sgm"))
    samples = make_trace_training_set(
        gathers, masks, n_traces_per_gather=int(cfg_s["n_traces_per_gather"]), seed=seed)
    ctx.log(f"  training trace segmenter on {len(samples)} traces")
    seg = train_trace_unet(
        samples, net_len=int(cfg_s["net_len"]), kernel=int(cfg_s["kernel"]),
        n_epochs=int(cfg_s["n_epochs"]), batch_size=int(cfg_s["batch_size"]),
        lr=float(cfg_s["lr"]), seed=seed)
    seg_path = ctx.dir("artifacts") / "segmenter.nnw"
    seg.save(seg_path)
    tele = ctx.dir("telemetry") / "segment_loss.csv"
    tele.write_text("epoch,bce\n" + "".join(
        f"{i},{v:.6f}\n" for i, v in enumerate(seg.loss_history_)))
    return [seg_path, tele], {"n_samples": len(samples)}


def _stage_train_filter(ctx: RunContext) -> tuple[list[Path], dict]:
    cfg_f = _stage_cfg(ctx.config, "filter")
    seed = stage_seed(ctx.seed, "train-filter")
    train_ids, _ = ctx.split_ids()
    tmap = ctx.load_transfer_map()
    seg = ctx.load_segmenter()
    pairs = []
    for gid in train_ids:
        noisy = read_gather(ctx.gather_path("train", "noisy", gid))
        clean = read_gather(ctx.gather_path("train", "clean", gid))
        eq_noisy = apply_equalization(noisy, tmap)
        eq_clean = apply_equalization(clean, tmap)
        mask = segment_gather(eq_noisy, seg)
        pairs.extend(sample_paired_tiles(
            eq_noisy, eq_clean, mask, tile_size=int(cfg_f["tile_size"]),
            n=int(cfg_f["n_pairs_per_gather"]), seed=seed))
    ctx.log(f"  adversarial training on {len(pairs)} tile pairs")
    model = train_cgan(
        pairs, tile_size=int(cfg_f["tile_size"]), n_epochs=int(cfg_f["n_epochs"]),
        batch_size=int(cfg_f["batch_size"]), lr=float(cfg_f["lr"]),
        gan_weight=float(cfg_f["gan_weight"]), l1_weight=float(cfg_f["l1_weight"]),
        seed=seed)
    model_path = ctx.dir("artifacts") / "cgan.nnw"
    model.save(model_path)
    tele = ctx.dir("telemetry") / "cgan.csv"
    tele.write_text(model.telemetry_csv())
    return [model_path, tele], {"n_pairs": len(pairs)}


def _stage_apply(ctx: RunContext) -> tuple[list[Path], dict]:
    cfg_f = _stage_cfg(ctx.config, "filter")
    _, test_ids = ctx.split_ids()
    tmap = ctx.load_transfer_map()
    seg = ctx.load_segmenter()
    model = ctx.load_filter()
    res_dir = ctx.dir("results")
    masks_dir = ctx.dir("masks")

    def one(gid: int):
        noisy = read_gather(ctx.gather_path("test", "noisy", gid))
        eq = apply_equalization(noisy, tmap)
        mask = segment_gather(eq, seg)
        filtered = filter_pipeline(noisy, mask, tmap, model,
                                   stride=int(cfg_f["stride"]))
        mp = masks_dir / f"final_{gid:03d}.sgm"
        write_mask(mask, mp, dt_s=noisy.dt_s, gather_id=gid)
        fp = res_dir / f"filtered_{gid:03d}.sgr"
        write_gather(filtered, fp)
        if ctx.emit_images:
            img_dir = ctx.dir("images")
            write_pgm(img_dir / f"final_mask_{gid:03d}.pgm", mask_blend_image(eq, mask))
            write_pgm(img_dir / f"filtered_{gid:03d}.pgm", gather_image(filtered))
        return [mp, fp]

    paths = []
    for chunk in _parallel(ctx.jobs, one, sorted(test_ids)):
        paths.extend(chunk)
    return paths, {"n_gathers": len(test_ids)}


def _scores_to_rows(scores: list[GatherScores]) -> list[dict]:
    return [s.__dict__.copy() for s in scores]


def _stage_evaluate(ctx: RunContext) -> tuple[list[Path], dict]:
    cfg_e = _stage_cfg(ctx.config, "evaluate")
    _, test_ids = ctx.split_ids()
    name = ctx.config["name"]

    def one(gid: int) -> GatherScores:
        noisy = read_gather(ctx.gather_path("test", "noisy", gid))
        clean = read_gather(ctx.gather_path("test", "clean", gid))
        filtered = read_gather(ctx.run_dir / "results" / f"filtered_{gid:03d}.sgr")
        mask = read_mask(ctx.run_dir / "masks" / f"final_{gid:03d}.sgm")
        score = evaluate_gather(
            noisy, filtered, clean, mask, dataset=name,
            band_width=int(cfg_e["band_width"]), sep_traces=int(cfg_e["sep_traces"]),
            n_amp_bins=int(cfg_e["n_amp_bins"]), freq_max_hz=float(cfg_e["freq_max_hz"]),
            freq_step_hz=float(cfg_e["freq_step_hz"]))
        if ctx.emit_images:
            spec_dir = ctx.dir("reports", "spectra")
            (spec_dir / f"spectra_{gid:03d}.csv").write_text(spectra_csv(
                noisy, filtered, clean, mask,
                band_width=int(cfg_e["band_width"]), sep_traces=int(cfg_e["sep_traces"]),
                freq_max_hz=float(cfg_e["freq_max_hz"]),
                freq_step_hz=float(cfg_e["freq_step_hz"])))
            (spec_dir / f"histograms_{gid:03d}.csv").write_text(histograms_csv(
                noisy, filtered, clean, mask,
                band_width=int(cfg_e["band_width"]), sep_traces=int(cfg_e["sep_traces"]),
                n_bins=int(cfg_e["n_amp_bins"])))
        return score

    scores = _parallel(ctx.jobs, one, sorted(test_ids))
    rep_dir = ctx.dir("reports")
    csv_path = rep_dir / "scores.csv"
    lines = ["dataset,gather_id,Q_p,Q_a,Q_c"]
    for s in scores:
        lines.append(f"{s.dataset},{s.gather_id},{s.q_p:.4f},{s.q_a:.4f},{s.q_c:.4f}")
    csv_path.write_text("\n".join(lines) + "\n")
    json_path = rep_dir / "scores.json"
    json_path.write_text(json.dumps(
        {"schema_version": REPORT_SCHEMA_VERSION, "scores": _scores_to_rows(scores)},
        indent=2, sort_keys=True) + "\n")
    return [csv_path, json_path], {"n_gathers": len(scores)}


def _report_csv(reports: list) -> str:
    lines = ["dataset,n_gathers,"
             "q_p_mean,q_p_std,q_p,q_a_mean,q_a_std,q_a,q_c_mean,q_c_std,q_c"]
    for r in reports:
        f = r.formatted()
        lines.append(
            f"{r.dataset},{r.n_gathers},"
            f"{r.means['q_p']:.4f},{r.stds['q_p']:.4f},{f['q_p']},"
            f"{r.means['q_a']:.4f},{r.stds['q_a']:.4f},{f['q_a']},"
            f"{r.means['q_c']:.4f},{r.stds['q_c']:.4f},{f['q_c']}")
    return "\n".join(lines) + "\n"


def _stage_report(ctx: RunContext) -> tuple[list[Path], dict]:
    scores_path = ctx.manifest.artifact("evaluate", "scores.json")
    payload = json.loads(scores_path.read_text())
    scores = [GatherScores(**row) for row in payload["scores"]]
    report = survey_report(scores)
    rep_dir = ctx.dir("reports")
    json_path = rep_dir / "survey.json"
    json_path.write_text(json.dumps(
        {"schema_version": REPORT_SCHEMA_VERSION, **report.to_dict()},
        indent=2, sort_keys=True) + "\n")
    csv_path = rep_dir / "survey.csv"
    csv_path.write_text(_report_csv([report]))
    ctx.log("  " + ", ".join(f"{k}={v}" for k, v in report.formatted().items()))
    return [json_path, csv_path], {"formatted": report.formatted()}


_STAGE_FNS = {
    "synth": _stage_synth,
    "train-detect": _stage_train_detect,
    "fit-mask": _stage_fit_mask,
    "train-segment": _stage_train_segment,
    "train-filter": _stage_train_filter,
    "apply": _stage_apply,
    "evaluate": _stage_evaluate,
    "report": _stage_report,
}


def run_stage(ctx: RunContext, name: str) -> bool:
    """Run one stage unless the manifest marks it done. True if it ran."""
    if name not in _STAGE_FNS:
        raise ValueError(f"unknown stage '{name}'")
    if not ctx.force and ctx.manifest.stage_done(name, ctx.chash):
        ctx.log(f"[{name}] up to date, skipping (--force to re-run)")
        return False
    ctx.log(f"[{name}] running")
    t0 = time.monotonic()
    try:
        paths, extra = _STAGE_FNS[name](ctx)
    except (ConfigError, StageError):
        raise
    except Exception as err:
        raise StageError(name, err) from err
    elapsed = time.monotonic() - t0
    ctx.manifest.record_stage(name, ctx.chash, stage_seed(ctx.seed, name),
                              paths, elapsed, extra=extra)
    ctx.log(f"[{name}] done in {elapsed:.1f}s")
    return True


# ------------------------------------------------- generalization experiment


def _eval_triples(ctx: RunContext, dataset: str, triples, tmap, seg, model):
    cfg_f = _stage_cfg(ctx.config, "filter")
    cfg_e = _stage_cfg(ctx.config, "evaluate")

    def one(triple):
        noisy, clean = triple.noisy, triple.clean
        eq = apply_equalization(noisy, tmap)
        mask = segment_gather(eq, seg)
        filtered = filter_pipeline(noisy, mask, tmap, model,
                                   stride=int(cfg_f["stride"]))
        return evaluate_gather(
            noisy, filtered, clean, mask, dataset=dataset,
            band_width=int(cfg_e["band_width"]), sep_traces=int(cfg_e["sep_traces"]),
            n_amp_bins=int(cfg_e["n_amp_bins"]), freq_max_hz=float(cfg_e["freq_max_hz"]),
            freq_step_hz=float(cfg_e["freq_step_hz"]))

    return survey_report(_parallel(ctx.jobs, one, list(triples)))


def run_generalization(ctx: RunContext) -> bool:
    """Train on the main geology; score held-out, variant, and geology B."""
    if "generalization" not in ctx.config:
        raise ConfigError("config has no 'generalization' section")
    name = "experiment-generalization"
    if not ctx.force and ctx.manifest.stage_done(name, ctx.chash):
        ctx.log(f"[{name}] up to date, skipping (--force to re-run)")
        return False
    for prereq in STAGE_ORDER[:5]:  # synth .. train-filter
        run_stage(ctx, prereq)

    gen = _section(
        ctx.config, "generalization",
        {"n_gathers": 6,
         "variant": {"t0_jitter": 0.15, "v_jitter": 0.10, "amp_jitter": 0.20}},
        required=("geology_b",),
    )
    n_eval = int(gen["n_gathers"])
    seed = stage_seed(ctx.seed, name)
    survey_cfg = _section(ctx.config, "survey", {"n_gathers": 15}, required=("geology",))
    geo_a = geology_from_dict(survey_cfg["geology"])

    ctx.log(f"[{name}] running")
    t0 = time.monotonic()
    try:
        tmap = ctx.load_transfer_map()
        seg = ctx.load_segmenter()
        model = ctx.load_filter()

        _, test_ids = ctx.split_ids()
        holdout = [  # the main survey's test triples, reloaded from disk
            SimpleNamespace(
                noisy=read_gather(ctx.gather_path("test", "noisy", gid)),
                clean=read_gather(ctx.gather_path("test", "clean", gid)),
            )
            for gid in sorted(test_ids)[:n_eval]
        ]

        var_cfg = gen["variant"]
        variant_geo = perturb_reflections(
            geo_a, np.random.default_rng([seed, 1]),
            t0_jitter=float(var_cfg["t0_jitter"]),
            v_jitter=float(var_cfg["v_jitter"]),
            amp_jitter=float(var_cfg["amp_jitter"]))
        variant_split = make_survey(variant_geo, 5 + n_eval, seed)
        variant = [variant_split.gathers[g] for g in variant_split.test_ids]

        geo_b = geology_from_dict(gen["geology_b"], "generalization.geology_b")
        b_split = make_survey(geo_b, 5 + n_eval, seed)
        b_triples = [b_split.gathers[g] for g in b_split.test_ids]

        rows = [
            _eval_triples(ctx, "a_holdout", holdout, tmap, seg, model),
            _eval_triples(ctx, "a_variant", variant, tmap, seg, model),
            _eval_triples(ctx, "geology_b", b_triples, tmap, seg, model),
        ]
    except (ConfigError, StageError):
        raise
    except Exception as err:
        raise StageError(name, err) from err

    rep_dir = ctx.dir("reports")
    json_path = rep_dir / "generalization.json"
    json_path.write_text(json.dumps(
        {"schema_version": REPORT_SCHEMA_VERSION,
         "rows": [{"schema_version": REPORT_SCHEMA_VERSION, **r.to_dict()} for r in rows]},
        indent=2, sort_keys=True) + "\n")
    csv_path = rep_dir / "generalization.csv"
    csv_path.write_text(_report_csv(rows))
    for r in rows:
        ctx.log(f"  {r.dataset}: " + ", ".join(f"{k}={v}" for k, v in r.formatted().items()))
    elapsed = time.monotonic() - t0
    ctx.manifest.record_stage(name, ctx.chash, seed, [json_path, csv_path],
                              elapsed, extra={"datasets": [r.dataset for r in rows]})
    ctx.log(f"[{name}] done in {elapsed:.1f}s")
    return True
