"""
pyodtr-ml のエラー定義

融合試験データからの治療ルール推定で発生する可能性のある例外クラスを定義します。
"""


class ODTRBaseError(Exception):
    """pyodtr-ml 関連の基本エラークラス"""

    def __init__(self, message, details=None):
        """
        初期化

        Parameters
        ----------
        message : str
            エラーメッセージ
        details : dict, optional
            エラーの詳細情報
        """
        self.message = message
        self.details = details or {}
        super().__init__(message)

    def __str__(self):
        """エラーメッセージの文字列表現"""
        if not self.details:
            return self.message

        details_str = ", ".join(f"{k}={v}" for k, v in self.details.items())
        return f"{self.message} ({details_str})"


class ParameterError(ODTRBaseError):
    """関数引数やモデルパラメータが不正な場合のエラー"""

    def __init__(self, message, name=None, value=None):
        """
        Parameters
        ----------
        message : str
            エラーメッセージ
        name : str, optional
            問題のあるパラメータ名
        value : object, optional
            渡された値
        """
        super().__init__(message, {"name": name, "value": value})


class ConfigError(ODTRBaseError):
    """実行設定（設定ファイル・コマンドライン）のエラー"""

    def __init__(self, message, field=None, value=None):
        """
        Parameters
        ----------
        message : str
            エラーメッセージ
        field : str, optional
            問題のある設定キー
        value : object, optional
            設定された値
        """
        super().__init__(message, {"field": field, "value": value})


class DataFormatError(ODTRBaseError):
    """データセットCSVのスキーマ違反"""

    def __init__(self, message, row=None, column=None, file_path=None):
        """
        Parameters
        ----------
        message : str
            エラーメッセージ
        row : int, optional
            問題のある行番号（ヘッダを1行目とする）
        column : str, optional
            問題のある列名
        file_path : str, optional
            読み込み中のファイルパス
        """
        super().__init__(
            message, {"row": row, "column": column, "file_path": file_path}
        )


class FileOperationError(ODTRBaseError):
    """ファイル操作に関するエラー"""

    def __init__(self, message, file_path=None, operation=None):
        """
        Parameters
        ----------
        message : str
            エラーメッセージ
        file_path : str, optional
            処理中のファイルパス
        operation : str, optional
            実行されていた操作 ('read', 'write' など)
        """
        super().__init__(message, {"file_path": file_path, "operation": operation})


class ConvergenceError(ODTRBaseError):
    """L1正則化回帰のソルバーが最大ステップ数以内に収束しなかった場合のエラー"""

    def __init__(
        self, message, objective_change=None, max_coef_change=None, sweeps=None, lam=None
    ):
        """
        Parameters
        ----------
        message : str
            エラーメッセージ
        objective_change : float, optional
            最後のステップでの目的関数の変化量
        max_coef_change : float, optional
            最後のステップでの係数変化の最大値
        sweeps : int, optional
            実行した座標降下のスイープ数の合計
        lam : float, optional
            その時点のペナルティ λ
        """
        super().__init__(
            message,
            {
                "objective_change": objective_change,
                "max_coef_change": max_coef_change,
                "sweeps": sweeps,
                "lam": lam,
            },
        )


class NuisanceFitError(ODTRBaseError):
    """局外パラメータのクロスフィッティングに失敗した場合のエラー"""

    def __init__(self, message, fold=None, arm=None, nuisance=None):
        """
        Parameters
        ----------
        message : str
            エラーメッセージ
        fold : int, optional
            失敗したフォールド番号
        arm : int, optional
            治療群 a
        nuisance : str, optional
            局外パラメータ名 ('g', 'm', 'b', 'r_y', 'r_a', 'r_s')
        """
        super().__init__(message, {"fold": fold, "arm": arm, "nuisance": nuisance})


class PositivityError(ODTRBaseError):
    """分母に現れる確率が下限を下回った場合のエラー"""

    def __init__(self, message, records=None, quantity=None):
        """
        Parameters
        ----------
        message : str
            エラーメッセージ
        records : list of int, optional
            違反したレコード番号（先頭のみ表示）
        quantity : str, optional
            違反した量 ('ghat', 'rhat' など)
        """
        records = list(records) if records is not None else []
        shown = records[:10]
        if len(records) > len(shown):
            shown = shown + [f"...(+{len(records) - len(shown)})"]
        super().__init__(
            message, {"records": shown, "count": len(records), "quantity": quantity}
        )
        self.records = records


class OracleError(ODTRBaseError):
    """真値オラクルのセルが空だった場合のエラー"""

    def __init__(self, message, cell=None):
        """
        Parameters
        ----------
        message : str
            エラーメッセージ
        cell : tuple, optional
            空だったセル (v11, v12, v13, v2)
        """
        super().__init__(message, {"cell": cell})


class RuleError(ODTRBaseError):
    """CPEモデルに必要な V2 水準が欠けている場合のエラー"""

    def __init__(self, message, v2_level=None):
        super().__init__(message, {"v2_level": v2_level})


class TargetingError(ODTRBaseError):
    """TMLE の揺らぎ（fluctuation）が推定方程式を解けなかった場合のエラー"""

    def __init__(self, message, iterations=None, mean_eif=None):
        super().__init__(message, {"iterations": iterations, "mean_eif": mean_eif})


class ReplicationError(ODTRBaseError):
    """シミュレーション反復の失敗率が許容値を超えた場合のエラー"""

    def __init__(self, message, failures=None, total=None):
        super().__init__(message, {"failures": failures, "total": total})
