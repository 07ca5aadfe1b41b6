# src/errors.py


class ModelCheckError(ValueError):
    """モデル検査ツール全体で共通の例外。code はクラス名をそのまま使う。"""

    @property
    def code(self) -> str:
        return type(self).__name__


class ConfigError(ModelCheckError):
    """環境変数などの設定値が不正な場合の例外"""


class ParseError(ModelCheckError):
    """入力テキストの構文エラー。位置が分かる場合は行と列を持つ。"""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (行 {line}, 列 {column})"
        super().__init__(message)


class ModelParseError(ParseError):
    pass


class NestedUntil(ParseError):
    pass


class UnsupportedTimeBound(ModelCheckError):
    pass


class UnknownProposition(ModelCheckError):
    pass


class MissingPolicy(ModelCheckError):
    pass


class ConflictingPolicy(ParseError):
    pass


class UnsupportedAdversary(ModelCheckError):
    pass


class VarInBound(ModelCheckError):
    pass


class UnboundedRegion(ModelCheckError):
    pass


class DepthExceeded(ModelCheckError):
    pass


class DensityNotNormalized(ModelCheckError):
    pass


class UnsupportedDistribution(ModelCheckError):
    pass


class DeltaTooLarge(ModelCheckError):
    pass


class DeltaNotDividingBound(ModelCheckError):
    pass


class PreconditionError(ModelCheckError):
    pass


class InvalidModel(ModelCheckError):
    """validate_automaton が違反を報告したモデルを検査しようとした場合の例外"""

    def __init__(self, codes: list[str]):
        self.codes = codes
        super().__init__(f"モデルが整合していません: {', '.join(codes)}")
