import json
import shutil

import numpy as np
import pytest

from wxdepth import io
from wxdepth.core import LayoutError, make_weather_spec
from wxdepth.pipeline import (
    CleanSample,
    GenerationConfig,
    generate_sample,
    load_clean,
    run_dataset,
    select_frames,
    verify_manifest,
)
from wxdepth.projection import project_cloud
from wxdepth.synthetic import make_frame, write_kitti_tree


def small_frame(i, seed=0):
    return make_frame(seed, f"{i:06d}", width=128, height=40, n_beams=24, n_azimuth=384)


@pytest.fixture(scope="module")
def tree(tmp_path_factory):
    root = tmp_path_factory.mktemp("kitti")
    write_kitti_tree(root, [small_frame(i) for i in range(3)], scenes={"000001": "urban"})
    return root


@pytest.fixture(scope="module")
def clean(tree):
    return load_clean(tree, "000000")


class TestGenerateSample:
    def test_clear_is_identity(self, clean):
        s = generate_sample(clean, make_weather_spec("clear", 0, seed=5))
        assert s.image.equals(clean.image) and s.cloud.equals(clean.cloud)
        assert np.array_equal(s.sparse_depth.values, project_cloud(clean.cloud, clean.calib, d_max=255.0).values)

    def test_fog_deterministic(self, clean):
        spec = make_weather_spec("fog", 2, seed=42)
        a, b = generate_sample(clean, spec), generate_sample(clean, spec)
        assert a.image.equals(b.image) and a.cloud.equals(b.cloud)
        assert np.array_equal(a.sparse_depth.values, b.sparse_depth.values)
        assert not a.image.equals(clean.image)

    def test_heavy_rain_with_raindrops(self, clean):
        spec = make_weather_spec("rain", 3, "day", "raindrop", seed=3)
        s = generate_sample(clean, spec)
        assert s.annotation.severity_value == 200.0 and s.annotation.lens == "raindrop"
        assert not s.image.equals(clean.image)
        assert not s.cloud.equals(clean.cloud)
        assert s.sparse_depth.valid.sum() < project_cloud(clean.cloud, clean.calib).valid.sum()

    def test_lens_only_leaves_cloud(self, clean):
        s = generate_sample(clean, make_weather_spec("clear", 0, "day", "snowflake", seed=1))
        assert s.cloud.equals(clean.cloud) and not s.image.equals(clean.image)

    def test_sample_type(self, clean):
        assert isinstance(clean, CleanSample)


class TestRunDataset:
    def test_empty_selection(self, tree, tmp_path):
        m = run_dataset(GenerationConfig(tree, tmp_path / "out", frames=[]))
        assert m.records == [] and m.stats["total_records"] == 0
        assert json.loads((tmp_path / "out" / "manifest.json").read_text())["records"] == []

    def test_counts_with_paired_clean(self, tree, tmp_path):
        cfg = GenerationConfig(tree, tmp_path / "out", weathers=("fog",), frames=["000000", "000001"],
                               emit_paired_clean=True)
        m = run_dataset(cfg)
        roles = [r["role"] for r in m.records]
        assert roles.count("corrupted") == 6 and roles.count("clean") == 2
        assert m.stats["paired_clean"] == 6
        assert m.stats["condition_counts"] == {"day-fog": 6}
        assert set(m.stats["range_trends"]) == {"fog"}
        assert verify_manifest(cfg.output_root, m.to_dict()) == []
        ann = io.read_annotation(cfg.output_root / "day_fog_l1_none" / "annotation" / "000001.json")
        assert ann.scene == "urban"

    def test_rerun_same_digests(self, tree, tmp_path):
        kw = dict(weathers=("snow",), levels=(3,), lenses=("none", "snowflake"), global_seed=9)
        a = run_dataset(GenerationConfig(tree, tmp_path / "a", **kw))
        b = run_dataset(GenerationConfig(tree, tmp_path / "b", **kw))
        assert [r["digests"] for r in a.records] == [r["digests"] for r in b.records]
        assert (tmp_path / "a" / "stats.json").read_bytes() == (tmp_path / "b" / "stats.json").read_bytes()

    def test_different_seed_differs(self, tree, tmp_path):
        a = run_dataset(GenerationConfig(tree, tmp_path / "a", weathers=("rain",), levels=(2,), global_seed=1))
        b = run_dataset(GenerationConfig(tree, tmp_path / "b", weathers=("rain",), levels=(2,), global_seed=2))
        assert a.records[0]["digests"]["raw_cloud"] != b.records[0]["digests"]["raw_cloud"]

    def test_missing_night_image_is_per_frame_error(self, tree, tmp_path):
        m = run_dataset(GenerationConfig(tree, tmp_path / "out", weathers=("fog",), levels=(1,),
                                         times=("day", "night")))
        assert len(m.records) == 3
        assert len(m.errors) == 3 and all("night" in e["condition"] for e in m.errors)

    def test_night_images_used_when_present(self, tree, tmp_path):
        root = tmp_path / "in"
        shutil.copytree(tree, root)
        (root / "night").mkdir()
        for p in (root / "image").glob("*.png"):
            shutil.copy(p, root / "night" / p.name)
        m = run_dataset(GenerationConfig(root, tmp_path / "out", weathers=("clear",), times=("night",)))
        assert not m.errors and len(m.records) == 3

    def test_layout_error(self, tmp_path):
        (tmp_path / "in").mkdir()
        with pytest.raises(LayoutError):
            run_dataset(GenerationConfig(tmp_path / "in", tmp_path / "out"))

    def test_config_validation(self, tree, tmp_path):
        with pytest.raises(ValueError):
            GenerationConfig(tree, tree)
        with pytest.raises(ValueError):
            GenerationConfig(tree, tmp_path, levels=(4,))
        with pytest.raises(ValueError):
            GenerationConfig(tree, tmp_path, weathers=("hail",))


class TestFrameSelection:
    def test_fraction_is_order_independent(self):
        ids = [f"{i:06d}" for i in range(200)]
        a = select_frames(ids, 0.25, 7)
        b = select_frames(list(reversed(ids)), 0.25, 7)
        assert sorted(a) == sorted(b) and 20 < len(a) < 80

    def test_unknown_ids(self):
        with pytest.raises(LayoutError):
            select_frames(["000000"], ["000009"], 0)
