"""Pure-Python fallback for the XOR kernel.

Big-int XOR runs in C inside CPython, so this stays within a small factor of the
compiled kernel for large buffers.
"""


def xor_tile(data, key) -> bytes:
    data = bytes(data)
    key = bytes(key)
    if not key:
        raise ValueError("key must not be empty")
    n = len(data)
    if n == 0:
        return b""
    reps = -(-n // len(key))
    stream = (key * reps)[:n]
    x = int.from_bytes(data, "little") ^ int.from_bytes(stream, "little")
    return x.to_bytes(n, "little")
