"""Service configuration: a plain ``key = value`` text file.

Blank lines and ``#`` comments are ignored.  Relative directories are resolved
against the config file's directory.  Recognised keys and defaults::

    host = 127.0.0.1
    port = 8470
    data_dir = ./sba-data          # parent of main/, remote/ and admin/
    main_dir / remote_dir / admin_dir   (override individual stores)
    storage_form = encrypted       # or original
    restore_mode = manual          # or automatic
    poll_interval = 5              # seconds
    retry_queue_size = 1024
    enable_fault_endpoints = false # CRASH/RESTART verbs, test builds only
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

from .errors import InvalidArgument

_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


@dataclass
class Config:
    host: str = "127.0.0.1"
    port: int = 8470
    data_dir: str = "sba-data"
    main_dir: str = ""
    remote_dir: str = ""
    admin_dir: str = ""
    storage_form: str = "encrypted"
    restore_mode: str = "manual"
    poll_interval: float = 5.0
    retry_queue_size: int = 1024
    enable_fault_endpoints: bool = False

    def __post_init__(self):
        self.main_dir = self.main_dir or os.path.join(self.data_dir, "main")
        self.remote_dir = self.remote_dir or os.path.join(self.data_dir, "remote")
        self.admin_dir = self.admin_dir or os.path.join(self.data_dir, "admin")


def parse_config(text: str, base_dir: str = ".") -> Config:
    types = {f.name: f.type for f in fields(Config)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or key not in types:
            raise InvalidArgument(f"config line {lineno}: unknown or malformed entry {raw!r}")
        kind = types[key]
        try:
            if kind == "int":
                values[key] = int(value)
            elif kind == "float":
                values[key] = float(value)
            elif kind == "bool":
                values[key] = _BOOL[value.lower()]
            else:
                values[key] = value
        except (ValueError, KeyError):
            raise InvalidArgument(f"config line {lineno}: bad value for {key}: {value!r}") from None
        if key.endswith("_dir") and not os.path.isabs(value):
            values[key] = os.path.normpath(os.path.join(base_dir, value))
    if "data_dir" not in values:
        values["data_dir"] = os.path.normpath(os.path.join(base_dir, Config.data_dir))
    return Config(**values)


def load_config(path) -> Config:
    path = os.fspath(path)
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), os.path.dirname(os.path.abspath(path)))
