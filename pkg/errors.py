"""
例外定義モジュール
CLIの終了コードに対応付けられるエラー分類
"""


class ConfigError(ValueError):
    """設定ファイル・パラメータの不備（終了コード 2）"""

    exit_code = 2

    def __init__(self, message: str, code: str = 'config'):
        super().__init__(message)
        self.code = code


class DomainError(ConfigError):
    """関数の定義域外の引数（負の準備金、範囲外のインデックスなど）"""

    def __init__(self, message: str):
        super().__init__(message, code='domain')


class AssumptionError(ValueError):
    """仮定 (A1)/(A3) の不成立（終了コード 3）"""

    exit_code = 3

    def __init__(self, message: str, code: str = 'assumption'):
        super().__init__(message)
        self.code = code


class SolverError(ArithmeticError):
    """数値計算の失敗（終了コード 4）"""

    exit_code = 4

    def __init__(self, message: str, code: str = 'numeric'):
        super().__init__(message)
        self.code = code


class DivergentLimitError(SolverError):
    """極限 L が発散する領域（E[ξ^{γ-1}] = ∞）"""

    def __init__(self, message: str):
        super().__init__(message, code='divergent')
