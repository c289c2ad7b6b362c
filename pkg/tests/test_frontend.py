import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from miniswift.errors import LexError, ParseError, TypeCheckError
from miniswift.lang import ast as A
from miniswift.lang import check, compile_source, lower, parse_source, tokenize, typecheck
from miniswift.lang.plan import top_level_calls
from miniswift.lang.printer import program as print_program

from conftest import fixture_path, read_fixture

FIXTURES = ["fmri.sws", "fmri2.sws", "fmri_lib.sws", "montage.sws", "montage_run.sws"]


def fmri_typed():
    prog = parse_source(read_fixture("fmri.sws"))
    lib = parse_source(read_fixture("fmri_lib.sws"))
    return prog, typecheck(prog, [lib])


# lexer

def test_smallest_type_decl_tokens():
    toks = tokenize("type Image {}")
    assert [(t.kind, t.text) for t in toks[:-1]] == [
        ("keyword", "type"), ("ident", "Image"), ("punct", "{"), ("punct", "}")]
    assert toks[-1].kind == "eof"


def test_fmri_tokenizes():
    toks = tokenize(read_fixture("fmri.sws"))
    assert toks[-1].kind == "eof"
    assert len(toks) > 100


def test_unterminated_string_is_lex_error():
    with pytest.raises(LexError) as e:
        tokenize('"unterminated')
    assert e.value.line == 1


def test_illegal_character():
    with pytest.raises(LexError) as e:
        tokenize("type A {}\n  $")
    assert (e.value.line, e.value.col) == (2, 3)


def test_comments_are_skipped():
    toks = tokenize("// a comment\ntype A {} // trailing\n")
    assert [t.text for t in toks[:-1]] == ["type", "A", "{", "}"]


# parser

def test_fmri_ast_shape():
    prog = parse_source(read_fixture("fmri.sws"))
    assert len(prog.types) == 6
    assert [p.name for p in prog.procs] == ["reorient", "reorientRun", "fmri_wf"]
    assert len(prog.stmts) == 3
    assert prog.procs[0].is_atomic and not prog.procs[1].is_atomic


def test_montage_csv_mapper_params():
    prog = parse_source(read_fixture("montage.sws"))
    decl = [s for s in prog.stmts if isinstance(s, A.VarDecl) and s.name == "diffs"][0]
    assert decl.mapping.mapper == "csv_mapper"
    assert [k for k, _ in decl.mapping.params] == ["file", "skip", "header", "hdelim"]
    params = dict(decl.mapping.params)
    assert isinstance(params["file"], A.Name) and params["file"].id == "diffsTbl"
    assert params["skip"].value == 1
    assert params["hdelim"].value == "|"


def test_minimal_foreach_without_index():
    prog = parse_source("type V {} type R { V v[]; }\n"
                        "(R o) p (R r) { foreach v in r.v { } }")
    fe = prog.procs[0].body[0]
    assert isinstance(fe, A.Foreach)
    assert fe.elem == "v" and fe.index is None and fe.elem_type is None


def test_parse_error_carries_position_and_expected():
    src = "type A {}\n(A x) p (A y) {\n  x = ;\n}"
    with pytest.raises(ParseError) as e:
        parse_source(src)
    assert e.value.line == 3
    assert e.value.expected


def test_unknown_at_function_is_parse_error():
    with pytest.raises(ParseError):
        parse_source("type A {}\n(A o) p (A i) { app { cp @basename(i); } }")


def test_both_mapper_separator_styles():
    prog = parse_source('type F {}\nF a<file_mapper;file="x">;\nF b<file_mapper; file="y">;')
    assert [s.mapping.params[0][1].value for s in prog.stmts] == ["x", "y"]


@pytest.mark.parametrize("name", FIXTURES)
def test_round_trip_fixtures(name):
    prog = parse_source(read_fixture(name))
    again = parse_source(print_program(prog))
    assert again == prog


# type checker

def test_fmri_typechecks_with_library():
    _, tp = fmri_typed()
    assert tp.errors == []


def test_fmri_alone_reports_undefined_procedures():
    tp = check(parse_source(read_fixture("fmri.sws")))
    kinds = {e.kind for e in tp.errors}
    assert kinds == {"undefined-procedure"}
    assert len(tp.errors) == 2


def test_indexed_output_resolves_to_volume():
    _, tp = fmri_typed()
    proc = [p for p in tp.program.procs if p.name == "reorientRun"][0]
    assign = proc.body[0].body[0]
    assert repr(assign.target.ty) == "Volume"


def test_montage_member_access_resolves_to_image():
    tp = typecheck(parse_source(read_fixture("montage.sws")))
    fe = [s for s in tp.program.stmts if isinstance(s, A.Foreach)][0]
    assert repr(fe.body[0].init.ty) == "Image"


def test_type_mismatch():
    tp = check(parse_source("type Volume {} type Run { Volume v[]; }\nRun r; Volume v; v = r;"))
    assert [e.kind for e in tp.errors] == ["type-mismatch"]
    with pytest.raises(TypeCheckError):
        typecheck(parse_source("type Volume {} type Run { Volume v[]; }\nRun r; Volume v; v = r;"))


@pytest.mark.parametrize("src, kind", [
    ("Nope x;", "undefined-type"),
    ("type A {}\nA x = missing();", "undefined-procedure"),
    ("type A {}\n(A o) p (A i) { app { cp @filename(i) @filename(o); } }\nA a; A b = p(a, a);",
     "arity-mismatch"),
    ("int x = 1; x = 2;", "double-assignment"),
])
def test_error_kinds(src, kind):
    tp = check(parse_source(src))
    assert kind in {e.kind for e in tp.errors}


def test_errors_are_collected_not_first_only():
    tp = check(parse_source("Nope a; Nada b;"))
    assert len(tp.errors) == 2


def test_error_positions_within_source():
    src = "type A {}\nA x;\nB y;\nint z = \"s\";\n"
    tp = check(parse_source(src))
    lines = src.split("\n")
    for e in tp.errors:
        assert 1 <= e.line <= len(lines)
        assert 1 <= e.col <= len(lines[e.line - 1]) + 1


# lowering

def test_fmri_plan_counts():
    prog, tp = fmri_typed()
    plan = lower(tp)
    assert [s.name for s in plan.mapped_slots()] == ["bold1", "sbold1"]
    assert len(top_level_calls(plan)) == 1
    assert plan.statement_count() == A.program_stmt_count(tp.program)


def test_montage_plan():
    tp = typecheck(parse_source(read_fixture("montage.sws")))
    plan = lower(tp)
    assert [s.name for s in plan.mapped_slots()] == ["projImgTbl", "diffs"]
    assert len(top_level_calls(plan)) == 1
    assert plan.statement_count() == A.program_stmt_count(tp.program) == 7


def test_empty_program():
    plan = compile_source("")
    assert plan.statement_count() == 0


def test_plan_is_location_independent():
    plan = compile_source(read_fixture("montage.sws"))
    text = repr(plan)
    for word in ("simbatch", "localhost", "falkon"):
        assert word not in text


def test_four_stage_generator_plan(tmp_path):
    from miniswift.bench.workloads import WorkloadSpec, gen_workload

    wl = gen_workload(WorkloadSpec("fmri-like", 4), tmp_path)
    plan = wl.plan()
    calls = top_level_calls(plan)
    assert len(calls) == 1
    wf = plan.procs[calls[0].proc]
    stage_calls = []
    for s in wf.body:
        call = getattr(s, "init", None) or getattr(s, "value", None)
        if type(call).__name__ == "PCallE":
            stage_calls.append(call)
    assert len(stage_calls) == 4
    assert all(plan.procs[c.proc].kind == "compound" for c in stage_calls)


# properties

_names = st.sampled_from(["a", "b", "c", "vol", "x1"])


@st.composite
def small_programs(draw):
    n = draw(st.integers(0, 4))
    lines = ["type F {}", "type S { F f; int k; }"]
    for i in range(n):
        kind = draw(st.sampled_from(["int", "string", "F"]))
        name = f"{draw(_names)}{i}"
        if kind == "int":
            lines.append(f"int {name} = {draw(st.integers(0, 99))} + {draw(st.integers(0, 9))};")
        elif kind == "string":
            text = draw(st.text(alphabet="abc xyz", max_size=5))
            lines.append(f'string {name} = "{text}";')
        else:
            lines.append(f'F {name}<file_mapper; file="{name}.dat">;')
    if draw(st.booleans()):
        lines.append("S items[];\nforeach s, i in items { if (i > 1 && i != 3) { int q = i; } else { int q = 0; } }")
    return "\n".join(lines)


@settings(max_examples=60, deadline=None)
@given(small_programs())
def test_round_trip_property(src):
    prog = parse_source(src)
    assert parse_source(print_program(prog)) == prog


@settings(max_examples=60, deadline=None)
@given(st.text(alphabet="typeA{}();=<>\"\n x1,.[]", max_size=40))
def test_error_positions_property(src):
    try:
        prog = parse_source(src)
    except (LexError, ParseError) as e:
        n_lines = src.count("\n") + 1
        assert 1 <= e.line <= n_lines
        return
    for e in check(prog).errors:
        assert 0 <= e.line <= src.count("\n") + 1
