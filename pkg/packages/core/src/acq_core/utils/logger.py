"""
统一的日志工具模块

格式：``[LEVEL] prefix: message``；INFO / SUCCESS / DEBUG 写 stdout，WARN / ERROR 写 stderr。
debug 级别仅在设置 ACQ_DEBUG 时输出。sweep / ablation 的 worker 线程共用这些 logger，
写入经同一把锁串行化，行不会交错。
"""
import os
import sys
import threading

# level -> (label, stream attribute on sys)
_LEVELS = {
    "info": ("INFO", "stdout"),
    "success": ("SUCCESS", "stdout"),
    "warning": ("WARN", "stderr"),
    "error": ("ERROR", "stderr"),
    "debug": ("DEBUG", "stdout"),
}

_write_lock = threading.Lock()


def _debug_enabled() -> bool:
    return os.getenv("ACQ_DEBUG", "").lower() not in ("", "0", "false", "no")


class Logger:
    def __init__(self, prefix: str = ""):
        self.prefix = prefix

    def _format(self, label: str, message: str) -> str:
        return f"[{label}] {self.prefix}: {message}" if self.prefix else f"[{label}] {message}"

    def log(self, level: str, message: str) -> None:
        if level == "debug" and not _debug_enabled():
            return
        label, stream = _LEVELS[level]
        line = self._format(label, message)
        # sys.stdout / sys.stderr 在调用时查找，pytest capsys 替换后仍然生效
        with _write_lock:
            print(line, file=getattr(sys, stream), flush=True)

    def info(self, message: str):
        self.log("info", message)

    def success(self, message: str):
        self.log("success", message)

    def warning(self, message: str):
        self.log("warning", message)

    def error(self, message: str):
        self.log("error", message)

    def debug(self, message: str):
        self.log("debug", message)


_default_logger = Logger()


def info(message: str):
    _default_logger.info(message)


def success(message: str):
    _default_logger.success(message)


def warning(message: str):
    _default_logger.warning(message)


def error(message: str):
    _default_logger.error(message)


def debug(message: str):
    _default_logger.debug(message)


def get_logger(prefix: str = "") -> Logger:
    """获取带前缀的日志记录器，例如 ``get_logger("quantize")``。"""
    return Logger(prefix=prefix)
