"""Dataset generation: applies one weather spec to both modalities of every
selected frame and writes artifacts, annotations, a manifest and statistics.

Input layout (KITTI-DC style, one file per frame id)::

    image/<id>.png  velodyne/<id>.bin  groundtruth/<id>.png  calib/<id>.txt
    night/<id>.png        optional pre-translated night images
    scenes.json           optional {frame id: scene text}

Output layout::

    <time>_<weather>_l<level>_<lens>/{image,velodyne,sparse,groundtruth,annotation}/<id>.*
    clean/...             paired clean references
    manifest.json  stats.json
"""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import io
from .core import (
    CameraCalibration,
    DepthGrid,
    ImageBuffer,
    LayoutError,
    Lens,
    PointCloud,
    SampleAnnotation,
    TimeOfDay,
    Weather,
    WeatherSpec,
    WxDepthError,
    make_weather_spec,
)
from .lidar_weather import LidarWeatherParams, corrupt
from .metrics import DEFAULT_EDGES, compare_weather_trend, range_histogram
from .projection import project_cloud
from .rgb_weather import (
    FogImageParams,
    LensOcclusionParams,
    OccluderKind,
    composite_lens_occlusion,
    fill_depth_holes,
    overlay_particles,
    procedural_masks,
    synthesize_fog_image,
)
from .rng import RngStream, derive_key

log = logging.getLogger(__name__)

INPUT_DIRS = ("image", "velodyne", "groundtruth", "calib")
SPARSE_D_MAX = 255.0


@dataclass(frozen=True)
class RenderParams:
    """Knobs of the per-sample renderer; rain/snow overlay density is
    ``slope * rate`` primitives per megapixel."""

    lidar: LidarWeatherParams = LidarWeatherParams()
    fog: FogImageParams = FogImageParams()
    lens: LensOcclusionParams = LensOcclusionParams()
    rain_density_slope: float = 4.0
    snow_density_slope: float = 400.0


@dataclass(frozen=True, eq=False)
class CleanSample:
    image: ImageBuffer
    cloud: PointCloud
    gt_depth: DepthGrid
    calib: CameraCalibration


@dataclass(frozen=True, eq=False)
class CorruptedSample:
    image: ImageBuffer
    cloud: PointCloud
    sparse_depth: DepthGrid
    annotation: SampleAnnotation


def _default_masks():
    return {k: procedural_masks(k) for k in OccluderKind}


def generate_sample(clean: CleanSample, spec: WeatherSpec, params: RenderParams = RenderParams(),
                    masks: dict | None = None, scene: str = "unspecified") -> CorruptedSample:
    """Corrupt both modalities with the same spec and project the cloud."""
    root = RngStream(spec.seed)
    image = clean.image
    w = spec.weather
    if w is Weather.FOG:
        dense = fill_depth_holes(clean.gt_depth, params.fog.sky_depth)
        image = synthesize_fog_image(image, dense, spec.severity_value, params.fog)
    elif w is Weather.RAIN:
        image = overlay_particles(image, "rain_streak", params.rain_density_slope * spec.severity_value,
                                  root.child("rgb-particles"))
    elif w is Weather.SNOW:
        image = overlay_particles(image, "snowflake", params.snow_density_slope * spec.severity_value,
                                  root.child("rgb-particles"))
    if spec.lens is not Lens.NONE:
        lib = masks if masks is not None else _default_masks()
        kind = OccluderKind(spec.lens.value)
        image = composite_lens_occlusion(image, lib.get(kind, []), params.lens, root.child("rgb-lens"))

    cloud = corrupt(clean.cloud, w, spec.severity_value, params.lidar, root.child("lidar"))
    sparse = project_cloud(cloud, clean.calib, d_max=SPARSE_D_MAX)
    return CorruptedSample(image, cloud, sparse, SampleAnnotation.from_spec(spec, scene))


# ---------------------------------------------------------------- configuration

@dataclass(frozen=True)
class Condition:
    weather: Weather
    level: int
    time_of_day: TimeOfDay
    lens: Lens

    @property
    def name(self) -> str:
        return f"{self.time_of_day.value}_{self.weather.value}_l{self.level}_{self.lens.value}"


@dataclass(frozen=True)
class GenerationConfig:
    input_root: Path
    output_root: Path
    weathers: tuple = ("fog", "rain", "snow")
    levels: tuple = (1, 2, 3)
    times: tuple = ("day",)
    lenses: tuple = ("none",)
    global_seed: int = 0
    frames: object = "all"  # "all", a list of ids, or a fraction in (0, 1]
    emit_paired_clean: bool = False
    jobs: int = 1
    mask_dir: Path | None = None
    render: RenderParams = field(default_factory=RenderParams)

    def __post_init__(self):
        object.__setattr__(self, "input_root", Path(self.input_root))
        object.__setattr__(self, "output_root", Path(self.output_root))
        if self.input_root.resolve() == self.output_root.resolve():
            raise ValueError("output_root must differ from input_root")
        for lv in self.levels:
            if int(lv) not in (1, 2, 3):
                raise ValueError(f"severity level {lv} outside 1..3")
        for wx in self.weathers:
            Weather(wx)
        for t in self.times:
            TimeOfDay(t)
        for ln in self.lenses:
            Lens(ln)
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    def conditions(self) -> list[Condition]:
        out = []
        for wx in self.weathers:
            wx = Weather(wx)
            levels = (0,) if wx is Weather.CLEAR else tuple(sorted({int(l) for l in self.levels}))
            for lv in levels:
                for t in self.times:
                    for ln in self.lenses:
                        out.append(Condition(wx, lv, TimeOfDay(t), Lens(ln)))
        return out


def sample_seed(global_seed: int, frame_id: str, cond: Condition) -> int:
    return derive_key(global_seed, frame_id, cond.weather, cond.level, cond.time_of_day, cond.lens)


def list_frames(input_root: Path) -> list[str]:
    missing = [d for d in INPUT_DIRS if not (input_root / d).is_dir()]
    if missing:
        raise LayoutError(f"{input_root}: missing subdirectories {missing}")
    return sorted(p.stem for p in (input_root / "velodyne").glob("*.bin"))


def select_frames(all_frames: list[str], selection, global_seed: int) -> list[str]:
    if selection == "all" or selection is None:
        return list(all_frames)
    if isinstance(selection, float):
        if not 0.0 < selection <= 1.0:
            raise ValueError("frame fraction must lie in (0, 1]")
        # hash-based so membership does not depend on the listing order
        return [f for f in all_frames if derive_key(global_seed, "frame-select", f) / 2.0**64 < selection]
    wanted = set(selection)
    unknown = wanted.difference(all_frames)
    if unknown:
        raise LayoutError(f"unknown frame ids: {sorted(unknown)}")
    return [f for f in all_frames if f in wanted]


def load_clean(input_root: Path, frame_id: str, time_of_day: TimeOfDay = TimeOfDay.DAY) -> CleanSample:
    img_path = input_root / "image" / f"{frame_id}.png"
    if time_of_day is TimeOfDay.NIGHT:
        img_path = input_root / "night" / f"{frame_id}.png"
        if not img_path.exists():
            raise LayoutError(f"night condition needs a pre-translated image at {img_path}")
    image = io.read_image(img_path)
    cloud = io.read_cloud(input_root / "velodyne" / f"{frame_id}.bin", sanitize=True)
    gt = io.read_depth_png(input_root / "groundtruth" / f"{frame_id}.png")
    calib = io.read_calibration(input_root / "calib" / f"{frame_id}.txt", image.width, image.height)
    return CleanSample(image, cloud, gt, calib)


# ---------------------------------------------------------------- writing

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_sample(out_root: Path, cond_dir: str, frame_id: str, sample: CorruptedSample, gt_src: Path) -> dict:
    base = out_root / cond_dir
    paths = {
        "rgb": base / "image" / f"{frame_id}.png",
        "raw_cloud": base / "velodyne" / f"{frame_id}.bin",
        "sparse_depth": base / "sparse" / f"{frame_id}.png",
        "gt_depth": base / "groundtruth" / f"{frame_id}.png",
        "annotation": base / "annotation" / f"{frame_id}.json",
    }
    for p in paths.values():
        p.parent.mkdir(parents=True, exist_ok=True)
    io.write_image(paths["rgb"], sample.image)
    io.write_cloud(paths["raw_cloud"], sample.cloud)
    clamped = io.write_depth_png(paths["sparse_depth"], sample.sparse_depth)
    if clamped:
        log.warning("%s/%s: %d sparse depth values clamped", cond_dir, frame_id, clamped)
    shutil.copyfile(gt_src, paths["gt_depth"])
    io.write_annotation(paths["annotation"], sample.annotation)
    return {
        "paths": {k: p.relative_to(out_root).as_posix() for k, p in paths.items()},
        "digests": {k: _sha256(p) for k, p in paths.items()},
    }


def _load_scenes(input_root: Path) -> dict:
    p = input_root / "scenes.json"
    return json.loads(p.read_text()) if p.exists() else {}


def _process_frame(config: GenerationConfig, frame_id: str, conditions: list, masks) -> dict:
    """Generate every condition of one frame. Returns records, histograms and errors."""
    result = {"records": [], "hists": {}, "errors": []}
    scene = _load_scenes(config.input_root).get(frame_id, "unspecified")
    gt_src = config.input_root / "groundtruth" / f"{frame_id}.png"
    clean_rec = None
    try:
        day = load_clean(config.input_root, frame_id)
    except (WxDepthError, OSError, ValueError) as exc:
        result["errors"].append({"frame_id": frame_id, "condition": "*", "error": f"{type(exc).__name__}: {exc}"})
        return result
    result["hists"][("clear", 0)] = range_histogram(day.cloud, DEFAULT_EDGES)

    if config.emit_paired_clean:
        spec = make_weather_spec("clear", 0, "day", "none", sample_seed(config.global_seed, frame_id,
                                 Condition(Weather.CLEAR, 0, TimeOfDay.DAY, Lens.NONE)))
        sample = generate_sample(day, spec, config.render, masks, scene)
        clean_rec = {"frame_id": frame_id, "condition": "clean", "role": "clean", "spec": spec.to_dict()}
        clean_rec.update(_write_sample(config.output_root, "clean", frame_id, sample, gt_src))
        result["records"].append(clean_rec)

    for cond in conditions:
        try:
            base = day if cond.time_of_day is TimeOfDay.DAY else load_clean(config.input_root, frame_id, cond.time_of_day)
            spec = make_weather_spec(cond.weather, cond.level, cond.time_of_day, cond.lens,
                                     sample_seed(config.global_seed, frame_id, cond))
            sample = generate_sample(base, spec, config.render, masks, scene)
            rec = {"frame_id": frame_id, "condition": cond.name, "role": "corrupted", "spec": spec.to_dict()}
            rec.update(_write_sample(config.output_root, cond.name, frame_id, sample, gt_src))
            if clean_rec is not None:
                rec["clean_paths"] = dict(clean_rec["paths"])
            result["records"].append(rec)
            key = (cond.weather.value, cond.level)
            h = range_histogram(sample.cloud, DEFAULT_EDGES)
            result["hists"][key] = result["hists"][key].merged(h) if key in result["hists"] else h
        except (WxDepthError, OSError, ValueError) as exc:
            log.error("frame %s, condition %s failed: %s", frame_id, cond.name, exc)
            result["errors"].append({"frame_id": frame_id, "condition": cond.name,
                                     "error": f"{type(exc).__name__}: {exc}"})
    return result


@dataclass
class Manifest:
    records: list
    errors: list
    stats: dict

    def to_dict(self) -> dict:
        return {"records": self.records, "errors": self.errors}


def _stats(records: list, hists: dict) -> dict:
    counts: dict = {}
    for r in records:
        if r["role"] != "corrupted":
            continue
        s = r["spec"]
        key = f"{s['time_of_day']}-{s['weather']}"
        counts[key] = counts.get(key, 0) + 1
    paired = sum(1 for r in records if r["role"] == "corrupted" and "clean_paths" in r)
    by_weather: dict = {}
    for (wx, lv), h in hists.items():
        by_weather.setdefault(wx, {})[lv] = h
    histograms, trends = {}, {}
    clean = by_weather.get("clear", {}).get(0)
    for wx, levels in sorted(by_weather.items()):
        for lv, h in sorted(levels.items()):
            histograms[f"{wx}-l{lv}"] = h.to_dict()
        if wx != "clear" and clean is not None:
            trends[wx] = compare_weather_trend({0: clean, **levels}).to_dict()
    return {
        "condition_counts": dict(sorted(counts.items())),
        "paired_clean": paired,
        "total_records": len(records),
        "range_histograms": histograms,
        "range_trends": trends,
    }


def run_dataset(config: GenerationConfig) -> Manifest:
    frames = select_frames(list_frames(config.input_root), config.frames, config.global_seed)
    conditions = config.conditions()
    masks = io.load_mask_library(config.mask_dir) if config.mask_dir else _default_masks()
    config.output_root.mkdir(parents=True, exist_ok=True)

    if config.jobs == 1 or len(frames) <= 1:
        results = [_process_frame(config, f, conditions, masks) for f in frames]
    else:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            futures = [pool.submit(_process_frame, config, f, conditions, masks) for f in frames]
            results = [fut.result() for fut in futures]

    records, errors, hists = [], [], {}
    for res in results:
        records.extend(res["records"])
        errors.extend(res["errors"])
        for key, h in res["hists"].items():
            hists[key] = hists[key].merged(h) if key in hists else h
    records.sort(key=lambda r: (r["frame_id"], r["role"] != "clean", r["condition"]))
    errors.sort(key=lambda e: (e["frame_id"], e["condition"]))

    manifest = Manifest(records, errors, _stats(records, hists))
    (config.output_root / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")
    (config.output_root / "stats.json").write_text(json.dumps(manifest.stats, indent=2) + "\n")
    return manifest


def verify_manifest(output_root, manifest: dict) -> list[str]:
    """Paths whose file is missing or whose digest does not match."""
    root = Path(output_root)
    bad = []
    for r in manifest["records"]:
        for k, rel in r["paths"].items():
            p = root / rel
            if not p.exists() or _sha256(p) != r["digests"][k]:
                bad.append(rel)
    return bad
