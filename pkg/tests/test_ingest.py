import numpy as np
import pytest

from footprint.errors import EmptyMatrixError, ParseError, ReferentialError, ValidationError
from footprint.ingest import (
    TRAITS, LikeCatalog, LikeRecord, TraitTable, UserLikeMatrix, build_matrix, load_corpus,
    parse_likes, parse_pairs, parse_users, write_pairs,
)

HEADER = "userid,gender,age,political,ope,con,ext,agr,neu\n"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def users_for(ids):
    return TraitTable(ids, np.zeros((len(ids), len(TRAITS))))


def likes_for(ids):
    return LikeCatalog(LikeRecord(i, f"name {i}") for i in ids)


def test_single_profile_fields(tmp_path):
    t = parse_users(write(tmp_path, "u.csv", HEADER + "u1,1,25,0,0.1,-0.2,0.3,0.0,1.1\n"))
    assert len(t) == 1
    (p,) = list(t.profiles())
    assert p.gender == 1 and p.political == 0 and p.age == 25 and p.neu == 1.1


def test_empty_political_cell_is_missing(tmp_path):
    t = parse_users(write(tmp_path, "u.csv", HEADER + "u1,1,25,,0.1,-0.2,0.3,0.0,1.1\nu2,0,30,NA,0,0,0,0,0\n"))
    assert t.missing_count() == 2
    assert t.missing_count("political") == 2
    assert next(t.profiles()).political is None


def test_header_case_insensitive(tmp_path):
    t = parse_users(write(tmp_path, "u.csv", HEADER.upper() + "u1,1,25,0,0,0,0,0,0\n"))
    assert t.user_ids == ("u1",)


@pytest.mark.parametrize(
    "row, exc, line",
    [
        ("u1,1,25,0,0,0,0,0\n", ParseError, 3),
        ("u1,1,abc,0,0,0,0,0,0\n", ParseError, 3),
    ],
)
def test_malformed_users_rows(tmp_path, row, exc, line):
    p = write(tmp_path, "u.csv", HEADER + "u0,0,20,1,0,0,0,0,0\n" + row)
    with pytest.raises(exc) as info:
        parse_users(p)
    assert info.value.line == line
    assert f":{line}:" in str(info.value)


def test_duplicate_user_rejected(tmp_path):
    p = write(tmp_path, "u.csv", HEADER + "u1,1,25,0,0,0,0,0,0\nu1,0,20,1,0,0,0,0,0\n")
    with pytest.raises(ValidationError, match="duplicate"):
        parse_users(p)


def test_binary_and_age_validation(tmp_path):
    with pytest.raises(ValidationError):
        parse_users(write(tmp_path, "a.csv", HEADER + "u1,2,25,0,0,0,0,0,0\n"))
    with pytest.raises(ValidationError):
        parse_users(write(tmp_path, "b.csv", HEADER + "u1,1,-3,0,0,0,0,0,0\n"))


def test_bad_header(tmp_path):
    with pytest.raises(ParseError):
        parse_users(write(tmp_path, "u.csv", "id,a,b\n"))


def test_pairs_parsing(tmp_path):
    p = write(tmp_path, "ul.csv", "userid,likeid\nA,x\nA,y\nB,x\n")
    assert parse_pairs(p) == [("A", "x"), ("A", "y"), ("B", "x")]
    assert parse_pairs(write(tmp_path, "e.csv", "userid,likeid\n")) == []
    with pytest.raises(ParseError) as info:
        parse_pairs(write(tmp_path, "bad.csv", "userid,likeid\nA,x\nA,y,z\n"))
    assert info.value.line == 3


def test_pair_with_unknown_user_kept_until_build(tmp_path):
    pairs = parse_pairs(write(tmp_path, "ul.csv", "userid,likeid\nZ,x\n"))
    assert pairs == [("Z", "x")]
    with pytest.raises(ReferentialError, match="'Z'"):
        build_matrix(pairs, users_for(["A"]), likes_for(["x"]))
    with pytest.raises(ReferentialError, match="'q'"):
        build_matrix([("A", "q")], users_for(["A"]), likes_for(["x"]))


def test_likes_parsing(tmp_path):
    cat = parse_likes(write(tmp_path, "l.csv", 'likeid,name\nx,"Foo, Bar"\ny,Baz\n'))
    assert cat.ids == ("x", "y")
    assert cat.records[0].name == "Foo, Bar"


def test_build_dedup():
    m = build_matrix([("A", "x"), ("A", "x"), ("B", "x")], users_for(["A", "B"]), likes_for(["x"]))
    assert m.shape == (2, 1)
    assert m.n_pairs == 2


def test_build_density_half():
    m = build_matrix([("A", "x"), ("B", "y")], users_for(["A", "B"]), likes_for(["x", "y"]))
    assert m.shape == (2, 2)
    assert m.density == pytest.approx(0.5)


def test_build_empty():
    with pytest.raises(EmptyMatrixError):
        build_matrix([], users_for(["A"]), likes_for(["x"]))


def test_build_drops_unreferenced_and_keeps_order():
    m = build_matrix([("C", "z"), ("A", "x")], users_for(["A", "B", "C"]), likes_for(["x", "y", "z"]))
    assert m.row_ids == ("A", "C")
    assert m.col_ids == ("x", "z")
    assert set(m.pairs()) == {("A", "x"), ("C", "z")}


def test_trait_table_csv_roundtrip(tmp_path):
    vals = np.array([[1, 25.5, np.nan, 0.1, -0.2, 0.3, 0.0, 1.1], [0, 30, 1, 1e-17, 2, 3, 4, 5]])
    t = TraitTable(["a", "b"], vals)
    t.to_csv(tmp_path / "t.csv")
    assert parse_users(tmp_path / "t.csv") == t


def test_matrix_npz_roundtrip(tmp_path):
    m = UserLikeMatrix.from_entries(["a", "b"], ["x", "y", "z"], [0, 1, 1], [2, 0, 2])
    m.save(tmp_path / "m.npz")
    assert UserLikeMatrix.load(tmp_path / "m.npz") == m


def test_load_corpus(tmp_path):
    write(tmp_path, "users.csv", HEADER + "A,1,20,0,0,0,0,0,0\nB,0,21,1,0,0,0,0,0\n")
    write(tmp_path, "likes.csv", "likeid,name\nx,X\n")
    write_pairs(tmp_path / "users-likes.csv", [("A", "x"), ("B", "x")])
    users, likes, pairs = load_corpus(tmp_path)
    assert build_matrix(pairs, users, likes).n_pairs == 2
