#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Little-endian building blocks shared by the dataset (CSID), checkpoint (CSIK)
and CSI-codeword pair (CSIP) file formats
"""

import hashlib
import logging
import struct

import numpy as np

logger = logging.getLogger(__name__)

FLOAT64_LE = np.dtype('<f8')


class BinaryWriter:
    """Accumulates a binary file body in memory"""

    def __init__(self, magic: bytes, version: int):
        if len(magic) != 4:
            raise ValueError(f"Magic must be 4 bytes, got {magic!r}")
        self._parts = [magic, struct.pack('<I', version)]

    def pack(self, fmt: str, *values):
        self._parts.append(struct.pack('<' + fmt, *values))

    def raw(self, payload: bytes):
        self._parts.append(payload)

    def text(self, value: str):
        encoded = value.encode('utf-8')
        self.pack('I', len(encoded))
        self.raw(encoded)

    def array(self, values):
        self.raw(np.ascontiguousarray(values, dtype=FLOAT64_LE).tobytes())

    def getvalue(self) -> bytes:
        return b''.join(self._parts)

    def write(self, path):
        payload = self.getvalue()
        with open(path, 'wb') as f:
            f.write(payload)
        logger.debug(f"Wrote {len(payload)} bytes to {path}")
        return payload


class BinaryReader:
    """Sequential reader that turns short reads into format errors"""

    def __init__(self, payload: bytes, magic: bytes, version: int, source='<memory>'):
        self.payload = payload
        self.offset = 0
        self.source = source
        found_magic = self._take(4)
        if found_magic != magic:
            raise ValueError(f"{source}: bad magic {found_magic!r}, expected {magic!r}")
        (found_version,) = self.unpack('I')
        if found_version != version:
            raise ValueError(f"{source}: unsupported format version {found_version}, expected {version}")
        self.version = found_version

    @classmethod
    def from_file(cls, path, magic: bytes, version: int):
        with open(path, 'rb') as f:
            payload = f.read()
        return cls(payload, magic, version, source=str(path))

    def _take(self, n):
        end = self.offset + n
        if end > len(self.payload):
            raise ValueError(f"{self.source}: truncated file (needed {n} bytes at offset "
                             f"{self.offset}, only {len(self.payload) - self.offset} left)")
        chunk = self.payload[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str):
        fmt = '<' + fmt
        return struct.unpack(fmt, self._take(struct.calcsize(fmt)))

    def raw(self, n):
        return self._take(n)

    def text(self) -> str:
        (length,) = self.unpack('I')
        return self._take(length).decode('utf-8')

    def array(self, shape):
        count = int(np.prod(shape, dtype=np.int64))
        chunk = self._take(count * FLOAT64_LE.itemsize)
        return np.frombuffer(chunk, dtype=FLOAT64_LE).astype(np.float64).reshape(shape)

    def expect_end(self):
        if self.offset != len(self.payload):
            raise ValueError(f"{self.source}: {len(self.payload) - self.offset} trailing bytes after payload")


def file_digest(path) -> str:
    """SHA-256 hex digest of a file"""
    h = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            h.update(chunk)
    return h.hexdigest()
