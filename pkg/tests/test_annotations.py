import pytest
from hypothesis import given
from hypothesis import strategies as st

from cpmkit.annotations import (
    Annotation,
    ClassMap,
    DatasetError,
    FieldCountError,
    LabelFile,
    NegativeClassError,
    NonNumericError,
    NormBox,
    OutOfRangeError,
    UnknownClassError,
    from_pixel_xyxy,
    load_labels,
    parse_label_line,
    parse_label_text,
    scan_dataset,
    to_pixel_xyxy,
    validate_label_text,
    write_label_file,
)
from cpmkit.errors import DomainError

coord = st.floats(0.0, 1.0)
size = st.floats(1e-6, 1.0)
annotations = st.builds(
    Annotation, st.integers(0, 50), st.builds(NormBox, coord, coord, size, size)
)


def test_parse_examples():
    assert parse_label_line("0 0.5 0.5 0.25 0.1") == Annotation(0, NormBox(0.5, 0.5, 0.25, 0.1))
    with pytest.raises(FieldCountError):
        parse_label_line("2 0.5 0.5")
    with pytest.raises(OutOfRangeError):
        parse_label_line("0 1.5 0.5 0.1 0.1")


@pytest.mark.parametrize(
    "line, err",
    [
        ("-1 0.5 0.5 0.1 0.1", NegativeClassError),
        ("a 0.5 0.5 0.1 0.1", NonNumericError),
        ("1.0 0.5 0.5 0.1 0.1", NonNumericError),
        ("1 0.5 x 0.1 0.1", NonNumericError),
        ("1 0.5 nan 0.1 0.1", NonNumericError),
        ("1 0.5 0.5 0 0.1", OutOfRangeError),
        ("1 0.5 0.5 0.1 -0.2", OutOfRangeError),
        ("1 -0.1 0.5 0.1 0.1", OutOfRangeError),
        ("1 0.5 0.5 0.1 0.1 9", FieldCountError),
        ("", FieldCountError),
    ],
)
def test_parse_rejects(line, err):
    with pytest.raises(err):
        parse_label_line(line, 4)


def test_error_carries_line_number():
    with pytest.raises(OutOfRangeError) as info:
        parse_label_text("0 0.5 0.5 0.1 0.1\n\n1 0.5 0.5 0.1 1.7\n", path="a.txt")
    assert info.value.line == 3
    assert "a.txt:3" in str(info.value)


def test_class_map_bound():
    cmap = ClassMap(("a", "b"))
    parse_label_line("1 0.5 0.5 0.1 0.1", class_map=cmap)
    with pytest.raises(UnknownClassError):
        parse_label_line("2 0.5 0.5 0.1 0.1", class_map=cmap)


def test_ingest_mode_clamps_with_warning():
    warnings = []
    ann = parse_label_line("0 1.2 0.5 0.1 1.5", 1, mode="ingest", warnings=warnings)
    assert ann.box == NormBox(1.0, 0.5, 0.1, 1.0)
    assert [w.code for w in warnings] == ["clamped", "clamped"]
    with pytest.raises(OutOfRangeError):
        parse_label_line("0 0.5 0.5 0.0 0.1", mode="ingest")


def test_write_examples():
    lf = LabelFile("x", (Annotation(3, NormBox(0.5, 0.5, 0.25, 0.1)),))
    assert write_label_file(lf) == "3 0.500000 0.500000 0.250000 0.100000\n"
    assert write_label_file(LabelFile("x")) == ""


@given(st.lists(annotations, max_size=8))
def test_round_trip(anns):
    lf = LabelFile("s", tuple(anns))
    text = write_label_file(lf)
    back = parse_label_text(text, "s")
    assert len(back.annotations) == len(anns)
    for a, b in zip(anns, back.annotations):
        assert a.class_id == b.class_id
        for u, v in zip((a.box.cx, a.box.cy, a.box.w, a.box.h), (b.box.cx, b.box.cy, b.box.w, b.box.h)):
            assert abs(u - v) <= 5e-7 + 1e-12
    assert write_label_file(back) == text


def test_validate_collects_all_issues():
    text = "0 0.5 0.5 0.1 0.1\n0 0.5\n0 0.02 0.5 0.1 0.1\n9 0.5 0.5 0.1 0.1\n"
    lf, issues = validate_label_text(text, "s", class_map=ClassMap.default(), path="s.txt")
    assert lf is None
    assert [(i.severity, i.code, i.line) for i in issues] == [
        ("error", "field_count", 2),
        ("warning", "extent", 3),
        ("error", "unknown_class", 4),
    ]


def test_default_class_map_is_checkpoints():
    assert ClassMap.default().names == (
        "window_20", "window_40", "window_60", "window_65", "window_70", "window_85", "window_95", "window_100",
    )
    with pytest.raises(DomainError):
        ClassMap(("a", "a"))
    with pytest.raises(DomainError):
        ClassMap.from_json('["a", ""]')


def test_pixel_conversion():
    assert to_pixel_xyxy(NormBox(0.5, 0.5, 0.25, 0.1), 640, 640) == pytest.approx((240, 288, 400, 352))
    assert to_pixel_xyxy(NormBox(0.5, 0.5, 1, 1), 100, 100) == (0, 0, 100, 100)


@given(st.builds(NormBox, coord, coord, size, size), st.integers(1, 5000), st.integers(1, 5000))
def test_pixel_round_trip(box, w, h):
    back = from_pixel_xyxy(*to_pixel_xyxy(box, w, h), w, h)
    for u, v in zip((box.cx, box.cy, box.w, box.h), (back.cx, back.cy, back.w, back.h)):
        assert abs(u - v) <= 1e-9


def _touch(path, text=""):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def test_scan_flat(tmp_path):
    _touch(tmp_path / "images" / "a.pgm")
    _touch(tmp_path / "images" / "b.pgm")
    _touch(tmp_path / "labels" / "a.txt", "0 0.5 0.5 0.1 0.1\n")
    _touch(tmp_path / "labels" / "b.txt")
    index = scan_dataset(tmp_path)
    assert index.stems() == ["a", "b"]
    assert {it.subset for it in index.items} == {"none"}
    assert not index.warnings


def test_scan_background_image(tmp_path):
    _touch(tmp_path / "images" / "a.pgm")
    index = scan_dataset(tmp_path)
    assert index.items[0].label is None
    assert [w.code for w in index.warnings] == ["no_label"]
    assert load_labels(index.items[0]).annotations == ()


def test_scan_subsets_and_errors(tmp_path):
    _touch(tmp_path / "images" / "train" / "a.pgm")
    _touch(tmp_path / "images" / "train" / "a.png")
    _touch(tmp_path / "images" / "val" / "a.pgm")
    _touch(tmp_path / "labels" / "test" / "ghost.txt")
    with pytest.raises(DatasetError) as info:
        scan_dataset(tmp_path)
    assert sorted(i.code for i in info.value.issues) == ["duplicate_stem", "orphan_label"]


def test_scan_is_partition(tmp_path):
    for sub in ("train", "val", "test"):
        for k in range(3):
            _touch(tmp_path / "images" / sub / f"{sub}{k}.pgm")
            _touch(tmp_path / "labels" / sub / f"{sub}{k}.txt")
    index = scan_dataset(tmp_path)
    images = [it.image for it in index.items]
    labels = [it.label for it in index.items]
    assert len(set(images)) == len(images) == 9
    assert len(set(labels)) == 9
    assert all(it.label.stem == it.image.stem for it in index.items)
