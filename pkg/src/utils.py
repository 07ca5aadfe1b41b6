# src/utils.py
import hashlib
import re
from fractions import Fraction
from pathlib import Path

import sympy

from .errors import ParseError

RATIONAL_PATTERN = re.compile(r"^\s*-?\d+(\s*/\s*\d+|\.\d+)?\s*$")


def parse_rational(text: str) -> Fraction:
    """
    "p/q"、整数、小数表記の文字列を Fraction に変換します。
    """
    if not isinstance(text, str) or not RATIONAL_PATTERN.match(text):
        raise ParseError(f"有理数として解釈できません: {text!r}")
    try:
        value = Fraction(text.replace(" ", ""))
    except ZeroDivisionError:
        raise ParseError(f"分母が0です: {text!r}") from None
    return value


def to_sympy(value: Fraction | int) -> sympy.Rational:
    value = Fraction(value)
    return sympy.Rational(value.numerator, value.denominator)


def to_fraction(value) -> Fraction:
    """sympy の有理数(または整数)を Fraction に戻す"""
    rational = sympy.Rational(value)
    return Fraction(int(rational.p), int(rational.q))


def rational_str(value: Fraction) -> str:
    return str(Fraction(value))


def rational_fields(name: str, value: Fraction | None) -> dict:
    """
    レポート用に有理数を "p/q" 文字列と小数近似の2フィールドにします。
    """
    if value is None:
        return {name: None, f"{name}_decimal": None}
    return {name: rational_str(value), f"{name}_decimal": float(value)}


def read_source(path: str | Path, error_class: type[ParseError] = ParseError) -> str:
    """入力ファイルを UTF-8 で読み込みます。デコードできない場合は error_class を送出します。"""
    try:
        return Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise error_class(f"{path} を UTF-8 として読み込めません (位置 {e.start}: {e.reason})") from None


def content_digest(*paths: str | Path | None) -> str:
    """入力ファイル群の内容から SHA-256 ダイジェストを計算します。"""
    digest = hashlib.sha256()
    for path in paths:
        if path is None:
            continue
        path = Path(path)
        if not path.is_file():
            # 組み込み名(first-edge など)は名前そのものを混ぜる
            digest.update(str(path).encode("utf-8"))
            continue
        digest.update(path.read_bytes())
    return digest.hexdigest()
