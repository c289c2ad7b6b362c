import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from miniswift.data import types as T
from miniswift.data.mappers import (REGISTRY, FsMapper, Mapper, MapperRegistry, check_shape,
                                    default_registry, map_dataset, register_mapper)
from miniswift.data.nodes import FAILED, RESOLVED, UNRESOLVED, Graph, fill, filename_of
from miniswift.errors import (DoubleAssignmentError, DuplicateMapperError, IncompleteGroupError,
                              NotAFileError, RowArityError, ShapeMismatchError, UnknownMapperError)

from conftest import fixture_path

IMAGE = T.FileType("Image")
HEADER = T.FileType("Header")
VOLUME = T.StructType("Volume", [("img", IMAGE), ("hdr", HEADER)])
RUN = T.StructType("Run", [("v", T.ArrayType(VOLUME))])
DIFF = T.StructType("DiffStruct", [("cntr1", T.INT), ("cntr2", T.INT), ("plus", IMAGE),
                                   ("minus", IMAGE), ("diff", IMAGE)])
DIFFS = T.ArrayType(DIFF)


def touch(path):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    open(path, "w").close()


# fs_mapper

def test_fs_mapper_groups_volumes(tmp_path):
    for stem in ("bold1_001", "bold1_002"):
        for ext in (".img", ".hdr"):
            touch(str(tmp_path / "d" / (stem + ext)))
    touch(str(tmp_path / "d" / "other_001.img"))
    g = Graph()
    run = map_dataset(g, "bold1", "fs_mapper", {"location": "d", "prefix": "bold1"}, RUN,
                      "input", str(tmp_path))
    assert run.state == RESOLVED
    vols = run.field("v").sorted_elems()
    assert len(vols) == 2
    assert os.path.basename(vols[1].field("hdr").value) == "bold1_002.hdr"
    assert os.path.basename(vols[0].field("img").value) == "bold1_001.img"


def test_fs_mapper_on_fixture():
    g = Graph()
    run = map_dataset(g, "bold1", "run_mapper",
                      {"location": "fmriddc/functional_data/", "prefix": "bold1"}, RUN,
                      "input", fixture_path())
    assert len(run.snapshot()["v"]) == 2


def test_fs_mapper_empty_dir(tmp_path):
    (tmp_path / "empty").mkdir()
    g = Graph()
    run = map_dataset(g, "r", "fs_mapper", {"location": "empty", "prefix": "bold1"}, RUN,
                      "input", str(tmp_path))
    arr = run.field("v")
    assert arr.closed and run.state == RESOLVED and arr.children == {}


def test_groups_one_complete():
    groups = FsMapper.groups("/x", ["a_1.img", "a_1.hdr"], {"img": ".img", "hdr": ".hdr"})
    assert [stem for stem, _ in groups] == ["a_1"]


def test_groups_incomplete():
    with pytest.raises(IncompleteGroupError) as e:
        FsMapper.groups("/x", ["a_1.img"], {"img": ".img", "hdr": ".hdr"})
    assert e.value.stem == "a_1"


def test_groups_120_sorted():
    names = [f"bold1_{i:03d}{ext}" for i in reversed(range(1, 121)) for ext in (".img", ".hdr")]
    groups = FsMapper.groups("/x", names, {"img": ".img", "hdr": ".hdr"})
    stems = [s for s, _ in groups]
    assert len(stems) == 120 and stems == sorted(stems)


def test_fs_output_target_path(tmp_path):
    g = Graph()
    run = map_dataset(g, "sbold1", "fs_mapper", {"location": "out", "prefix": "sbold1"}, RUN,
                      "output", str(tmp_path))
    leaf = run.field("v").add_elem(0).field("hdr")
    assert filename_of(leaf) == os.path.join(str(tmp_path), "out", "sbold1_0000.hdr")
    assert leaf.state == UNRESOLVED


# csv_mapper

def test_csv_montage_diffs_rows():
    g = Graph()
    arr = map_dataset(g, "diffs", "csv_mapper", {"file": "montage/overlaps.tbl", "skip": 1,
                                                 "header": True, "hdelim": "|"},
                      DIFFS, "input", fixture_path())
    rows = arr.snapshot()
    assert len(rows) == 11
    assert (rows[0]["cntr1"], rows[0]["cntr2"]) == (0, 91)
    assert os.path.basename(rows[0]["diff"]) == "diff.000000.000091.fits"
    row = [r for r in rows if (r["cntr1"], r["cntr2"]) == (2, 739)][0]
    assert os.path.basename(row["minus"]) == "p_980415s-j0630257.fits"


def test_csv_skip_everything(tmp_path):
    (tmp_path / "t.tbl").write_text("0 1 a b c\n0 2 a b c\n")
    g = Graph()
    arr = map_dataset(g, "d", "csv_mapper", {"file": "t.tbl", "skip": 5}, DIFFS, "input",
                      str(tmp_path))
    assert arr.snapshot() == [] and arr.state == RESOLVED


def test_csv_row_arity(tmp_path):
    (tmp_path / "t.tbl").write_text("0 1 a b c\n0 2 a b\n")
    with pytest.raises(RowArityError) as e:
        map_dataset(Graph(), "d", "csv_mapper", {"file": "t.tbl"}, DIFFS, "input", str(tmp_path))
    assert e.value.line_no == 2


def test_csv_bad_int_cell(tmp_path):
    from miniswift.errors import FieldParseError

    (tmp_path / "t.tbl").write_text("zero 1 a b c\n")
    with pytest.raises(FieldParseError):
        map_dataset(Graph(), "d", "csv_mapper", {"file": "t.tbl"}, DIFFS, "input", str(tmp_path))


# filename

def test_filename_of_resolved_leaf():
    g = Graph()
    leaf = g.node(IMAGE, "x")
    leaf.resolve("data/x.hdr")
    assert filename_of(leaf) == "data/x.hdr"


def test_filename_of_struct_raises():
    g = Graph()
    with pytest.raises(NotAFileError):
        filename_of(g.node(VOLUME, "v"))


def test_unmapped_leaf_lives_in_run_dir(tmp_path):
    g = Graph(str(tmp_path))
    leaf = g.node(IMAGE, "tmp")
    path = filename_of(leaf)
    assert path.startswith(str(tmp_path)) and path.endswith(".dat")


# registry

class EchoMapper(Mapper):
    name = "echo"

    def enumerate(self, params, ty, base_dir="."):
        return str(params["value"])


def test_register_then_map():
    reg = default_registry()
    register_mapper("echo", EchoMapper(), reg)
    node = map_dataset(Graph(), "e", "echo", {"value": "p"}, IMAGE, "input", registry=reg)
    assert node.value == "p"


def test_duplicate_mapper():
    reg = MapperRegistry()
    reg.register("m", EchoMapper())
    with pytest.raises(DuplicateMapperError):
        reg.register("m", EchoMapper())
    with pytest.raises(DuplicateMapperError):
        REGISTRY.copy().register("fs_mapper", EchoMapper())


def test_run_mapper_alias():
    assert REGISTRY.get("run_mapper") is REGISTRY.get("fs_mapper")


def test_unknown_mapper():
    with pytest.raises(UnknownMapperError):
        REGISTRY.get("nope")


# nodes

def test_single_assignment():
    g = Graph()
    leaf = g.node(T.INT, "x")
    leaf.resolve(1)
    with pytest.raises(DoubleAssignmentError):
        leaf.resolve(2)
    with pytest.raises(DoubleAssignmentError):
        leaf.fail(RuntimeError("late"))
    assert leaf.value == 1


def test_struct_resolves_when_fields_do():
    g = Graph()
    v = g.node(VOLUME, "v")
    seen = []
    v.when_done(lambda n, a: seen.append(n.state))
    v.field("img").resolve("a.img")
    g.drain()
    assert v.state == UNRESOLVED and seen == []
    v.field("hdr").resolve("a.hdr")
    g.drain()
    assert v.state == RESOLVED and seen == [RESOLVED]


def test_array_waits_for_close_and_elements():
    g = Graph()
    arr = g.node(T.ArrayType(T.INT), "a")
    arr.add_elem(0).resolve(1)
    e1 = arr.add_elem(1)
    arr.close()
    assert arr.state == UNRESOLVED  # one element still unresolved
    e1.resolve(2)
    assert arr.state == RESOLVED


def test_failure_propagates_up_and_down_not_sideways():
    g = Graph()
    run = g.node(RUN, "r")
    arr = run.field("v")
    v0, v1 = arr.add_elem(0), arr.add_elem(1)
    v0.fail(RuntimeError("boom"))
    assert v0.field("img").state == FAILED
    assert arr.state == FAILED and run.state == FAILED
    assert v1.state == UNRESOLVED and v1.field("hdr").state == UNRESOLVED


def test_callbacks_run_on_drain_only():
    g = Graph()
    leaf = g.node(T.INT, "x")
    hits = []
    leaf.when_done(lambda n, a: hits.append(a), "arg")
    leaf.resolve(3)
    assert hits == []
    g.drain()
    assert hits == ["arg"]


def test_check_shape_rejects_mismatch():
    with pytest.raises(ShapeMismatchError):
        check_shape({"img": "a"}, VOLUME)
    with pytest.raises(ShapeMismatchError):
        check_shape([1, "x"], T.ArrayType(T.INT))
    check_shape({"v": [{"img": "a", "hdr": "b"}]}, RUN)


# properties

@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["resolve", "fail"]), min_size=1, max_size=6))
def test_single_assignment_property(ops):
    leaf = Graph().node(T.INT, "x")
    outcomes = []
    for i, op in enumerate(ops):
        try:
            leaf.resolve(i) if op == "resolve" else leaf.fail(RuntimeError(str(i)))
            outcomes.append(True)
        except DoubleAssignmentError:
            outcomes.append(False)
    assert outcomes == [True] + [False] * (len(ops) - 1)
    assert leaf.state == (RESOLVED if ops[0] == "resolve" else FAILED)


run_trees = st.fixed_dictionaries({"v": st.lists(
    st.fixed_dictionaries({"img": st.text(min_size=1, max_size=8), "hdr": st.text(min_size=1, max_size=8)}),
    max_size=6)})


@settings(max_examples=100, deadline=None)
@given(run_trees)
def test_fill_snapshot_round_trip(tree):
    node = Graph().node(RUN, "r")
    check_shape(tree, RUN)
    fill(node, tree)
    assert node.state == RESOLVED
    assert node.snapshot() == tree


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(), max_size=8), st.data())
def test_array_resolves_exactly_when_all_elements_do(values, data):
    g = Graph()
    arr = g.node(T.ArrayType(T.INT), "a")
    elems = [arr.add_elem(i) for i in range(len(values))]
    arr.close()
    order = data.draw(st.permutations(range(len(values))))
    for k, i in enumerate(order):
        assert arr.state == UNRESOLVED
        elems[i].resolve(values[i])
    assert arr.state == RESOLVED and arr.snapshot() == values
