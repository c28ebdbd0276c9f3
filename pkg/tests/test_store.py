import numpy as np
import pytest

from spihits.detector import BoxAnnotation
from spihits.metrics import SelectionSet
from spihits.patterns import DetectorGeometry, Pattern
from spihits.store import (
    LabelRecord,
    Store,
    StoreCorruptionError,
    StoreError,
    UnknownPatternError,
)

GEO = DetectorGeometry(panel_shape=(16, 32))


def make_store(tmp_path, n=2):
    store = Store(tmp_path / "store", geometry=GEO)
    rng = np.random.default_rng(0)
    for i in range(n):
        counts = rng.poisson(2.0, size=GEO.panel_shape).astype(np.float32)
        store.write_pattern(Pattern(id=f"pat{i:04d}", counts=counts, geometry=GEO))
    store.write_manifest()
    return store


class TestFrames:
    def test_roundtrip_bitwise(self, tmp_path):
        store = Store(tmp_path, geometry=GEO)
        counts = np.random.default_rng(1).random(GEO.panel_shape).astype(np.float32)
        store.write_pattern(Pattern(id="a", counts=counts, geometry=GEO))
        back = store.read_pattern("a")
        assert back.counts.tobytes() == counts.tobytes()

    def test_frame_byte_length(self, tmp_path):
        geo = DetectorGeometry()  # 512 x 1024 panel
        store = Store(tmp_path, geometry=geo)
        store.write_pattern(
            Pattern(id="full", counts=np.zeros(geo.panel_shape, np.float32),
                    geometry=geo)
        )
        assert store.frame_path("full").stat().st_size == 512 * 1024 * 4

    def test_truncated_file_is_error_not_partial(self, tmp_path):
        store = make_store(tmp_path)
        path = store.frame_path("pat0000")
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(StoreCorruptionError):
            store.read_pattern("pat0000")

    def test_unknown_id(self, tmp_path):
        store = make_store(tmp_path)
        with pytest.raises(UnknownPatternError):
            store.read_pattern("nope")

    def test_manifest_reload(self, tmp_path):
        store = make_store(tmp_path, n=3)
        again = Store(store.root)
        assert again.ids == store.ids
        assert again.geometry == GEO
        assert again.verify() == []

    def test_verify_detects_length_mismatch(self, tmp_path):
        store = make_store(tmp_path)
        store.frame_path("pat0001").write_bytes(b"123")
        problems = store.verify()
        assert any("pat0001" in p for p in problems)


class TestLabels:
    def test_append_then_load(self, tmp_path):
        store = make_store(tmp_path)
        rec = LabelRecord(pattern_id="pat0000", label="single", author="human",
                          box=BoxAnnotation(0.5, 0.5, 0.3, 0.55))
        store.append_label(rec)
        effective = store.load_labels()
        assert effective[("pat0000", "human")].box == rec.box

    def test_later_timestamp_wins(self, tmp_path):
        store = make_store(tmp_path)
        store.append_label(LabelRecord("pat0000", "single", "human",
                                       timestamp="2026-01-01T00:00:00+00:00"))
        store.append_label(LabelRecord("pat0000", "non_single", "human",
                                       timestamp="2026-01-02T00:00:00+00:00"))
        assert store.load_labels()[("pat0000", "human")].label == "non_single"
        assert len(store.load_label_log()) == 2  # audit trail intact

    def test_single_without_box_accepted(self, tmp_path):
        store = make_store(tmp_path)
        store.append_label(LabelRecord("pat0000", "single", "human"))
        assert store.load_labels()[("pat0000", "human")].box is None

    def test_box_on_non_single_rejected(self):
        with pytest.raises(ValueError, match="box"):
            LabelRecord("pat0000", "non_single", "human",
                        box=BoxAnnotation(0.5, 0.5, 0.5, 0.5))

    def test_unknown_pattern_rejected(self, tmp_path):
        store = make_store(tmp_path)
        with pytest.raises(UnknownPatternError):
            store.append_label(LabelRecord("ghost", "single", "human"))

    def test_authors_kept_separate(self, tmp_path):
        store = make_store(tmp_path)
        store.append_label(LabelRecord("pat0000", "single", "human"))
        store.append_label(LabelRecord("pat0000", "non_single", "model:fam:100"))
        eff = store.load_labels()
        assert eff[("pat0000", "human")].label == "single"
        assert eff[("pat0000", "model:fam:100")].label == "non_single"


class TestSelections:
    def test_roundtrip(self, tmp_path):
        store = make_store(tmp_path)
        selection = SelectionSet(method="stable", threshold=0.24,
                                 ids={"pat0001", "pat0000"})
        store.write_selection("stable", selection)
        back = store.read_selection("stable")
        assert back.ids == selection.ids
        assert back.threshold == 0.24

    def test_empty_selection_allowed(self, tmp_path):
        store = make_store(tmp_path)
        store.write_selection("empty", SelectionSet("m", 0.5, set()))
        assert store.read_selection("empty").ids == set()

    def test_duplicate_ids_rejected(self, tmp_path):
        store = make_store(tmp_path)
        path = store.selection_path("dup")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text('{"method": "m", "threshold": 0.5, "ids": ["a", "a"]}')
        with pytest.raises(StoreCorruptionError, match="duplicate"):
            store.read_selection("dup")

    def test_missing_selection(self, tmp_path):
        store = make_store(tmp_path)
        with pytest.raises(StoreError):
            store.read_selection("ghost")


class TestCheckpointsLayout:
    def test_paths_and_listing(self, tmp_path):
        store = make_store(tmp_path)
        p = store.checkpoint_path("fam-color-linear", 400)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(b"x")
        store.checkpoint_path("fam-color-linear", 100).write_bytes(b"x")
        assert store.list_checkpoints("fam-color-linear") == [100, 400]
        assert store.list_families() == ["fam-color-linear"]

    def test_curves_roundtrip(self, tmp_path):
        store = make_store(tmp_path)
        store.write_curve_csv("fam", "loss", [(1, 2.0), (2, 1.5)],
                              header=("iteration", "loss"))
        text = store.read_curve_csv("fam", "loss")
        assert text.splitlines() == ["iteration,loss", "1,2.0", "2,1.5"]
