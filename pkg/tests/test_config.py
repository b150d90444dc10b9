import pytest

from lfihar.config import Config, ConfigError, parse_text


def test_parse_comments_and_values():
    cfg = Config.from_text("# header\na.b = 3  # trailing\n\nname = hello world\n")
    assert cfg.get_int("a.b") == 3
    assert cfg.get_str("name") == "hello world"


def test_duplicate_key_reports_both_lines():
    with pytest.raises(ConfigError, match=r"f\.cfg:3: duplicate key 'x' \(first set on line 1\)"):
        parse_text("x = 1\ny = 2\nx = 3\n", "f.cfg")


def test_bad_line_and_key():
    with pytest.raises(ConfigError, match="f.cfg:2"):
        parse_text("a = 1\nnonsense\n", "f.cfg")
    with pytest.raises(ConfigError, match="invalid key"):
        parse_text("a..b = 1\n")


def test_typed_getters_report_location():
    cfg = Config.from_text("n = abc\nflag = maybe\n", "c.cfg")
    with pytest.raises(ConfigError, match=r"c\.cfg:1"):
        cfg.get_int("n")
    with pytest.raises(ConfigError, match=r"c\.cfg:2"):
        cfg.get_bool("flag")
    with pytest.raises(ConfigError, match="missing required key"):
        cfg.get_float("absent")


def test_lists_and_defaults():
    cfg = Config.from_text("xs = 1, 2.5 ,3\n")
    assert cfg.get_list("xs", float) == [1.0, 2.5, 3.0]
    assert cfg.get_list("ys", int, default=[4]) == [4]
    assert cfg.get_int("missing", 7) == 7


def test_layering_and_overrides():
    base = Config.from_text("a = 1\nb = 2\n")
    top = base.layer(Config.from_text("b = 3\n")).with_overrides(["a = 9"])
    assert top.get_int("a") == 9 and top.get_int("b") == 3
    assert base.get_int("b") == 2
    with pytest.raises(ConfigError, match="--set"):
        base.with_overrides(["novalue"])


def test_hash_is_order_and_comment_independent():
    a = Config.from_text("x = 1\ny = 2\n")
    b = Config.from_text("# note\ny = 2\n\nx = 1   # same\n")
    assert a.hash() == b.hash()
    assert a.hash() != Config.from_text("x = 1\ny = 3\n").hash()


def test_builtin_files_parse():
    defaults = Config.builtin("defaults.cfg")
    assert defaults.get_int("train.epochs") == 9
    assert Config.builtin("profiles.cfg").keys("profile.read.")
