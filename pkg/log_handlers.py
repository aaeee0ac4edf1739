import logging
import os
import re

LOG_FILE_PATTERN = re.compile(r"^log_(\d+)\.txt$")
INITIAL_REPEAT_THRESHOLD = 4


class RunFileHandler(logging.Handler):
    """
    Log handler that writes each run to its own file in a log directory.

    Files are named log_NNNN.txt with an incrementing counter. A message repeated
    back-to-back by the same logger is written once, then summarized as
    "(repeated N times)" lines whose spacing doubles each time.
    """

    def __init__(self, log_dir: str = "logs") -> None:
        """
        Args:
            log_dir: Directory to store log files (default: "logs")
        """
        super().__init__()
        self._log_dir = log_dir
        self._file = None
        # key: logger name, value: {'last_msg', 'levelno', 'count', 'threshold'}
        self._repeat_data = {}

        os.makedirs(log_dir, exist_ok=True)
        self._log_number = self._get_next_log_number()
        self._open_log_file()

    @property
    def path(self) -> str:
        return os.path.join(self._log_dir, f"log_{self._log_number:04d}.txt")

    def _get_next_log_number(self) -> int:
        """
        One past the highest existing log file counter, or 0.
        """
        try:
            files = os.listdir(self._log_dir)
        except OSError:
            return 0
        numbers = [int(m.group(1)) for m in map(LOG_FILE_PATTERN.match, files) if m]
        return max(numbers) + 1 if numbers else 0

    def _open_log_file(self) -> None:
        try:
            self._file = open(self.path, "a", encoding="utf-8")
        except OSError:
            self._file = None

    def emit(self, record: logging.LogRecord) -> None:
        """
        Write the record to the file, with repeat message detection.
        """
        if self._file is None:
            return

        try:
            key = record.name
            if key not in self._repeat_data:
                self._repeat_data[key] = {
                    "last_msg": None,
                    "levelno": record.levelno,
                    "count": 0,
                    "threshold": INITIAL_REPEAT_THRESHOLD,
                }
            data = self._repeat_data[key]
            message = record.getMessage()

            if message == data["last_msg"] and record.levelno == data["levelno"]:
                data["count"] += 1
                if data["count"] >= data["threshold"]:
                    self._file.write(f"{self.format(record)} (repeated {data['count']} times)\n")
                    self._file.flush()
                    data["threshold"] *= 2
                    data["count"] = 0
            else:
                self._file.write(self.format(record) + "\n")
                self._file.flush()
                data["last_msg"] = message
                data["levelno"] = record.levelno
                data["count"] = 0
        except OSError:
            self.handleError(record)

    def close(self) -> None:
        if self._file is not None:
            try:
                self._file.close()
            except OSError:
                pass
            self._file = None
        super().close()
