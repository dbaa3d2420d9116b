"""Binary PGM (P5) and PPM (P6) reading and writing, 8-bit only."""
import numpy as np

from .errors import FormatError

_WHITESPACE = b" \t\r\n"


def _tokens(buf, count):
    """Parse ``count`` header integers; return them and the payload offset."""
    pos = 0
    out = []
    while len(out) < count:
        while pos < len(buf) and (buf[pos] in _WHITESPACE or buf[pos] == ord("#")):
            if buf[pos] == ord("#"):
                end = buf.find(b"\n", pos)
                pos = len(buf) if end < 0 else end + 1
            else:
                pos += 1
        start = pos
        while pos < len(buf) and buf[pos] not in _WHITESPACE and buf[pos] != ord("#"):
            pos += 1
        tok = buf[start:pos]
        if not tok.isdigit():
            raise FormatError(f"bad netpbm header token {tok[:16]!r}")
        out.append(int(tok))
    if pos >= len(buf) or buf[pos] not in _WHITESPACE:
        raise FormatError("netpbm header must end with a single whitespace byte")
    return out, pos + 1


def decode(buf):
    """Decode P5 -> (h, w) uint8 array or P6 -> (h, w, 3) uint8 array."""
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported netpbm magic {magic!r}; expected P5 or P6")
    (w, h, maxval), offset = _tokens(buf[2:], 3)
    offset += 2
    if w < 1 or h < 1:
        raise FormatError(f"invalid image size {w}x{h}")
    if not 0 < maxval < 256:
        raise FormatError(f"only 8-bit netpbm supported, maxval={maxval}")
    channels = 3 if magic == b"P6" else 1
    n = w * h * channels
    payload = buf[offset:offset + n]
    if len(payload) < n:
        raise FormatError(f"truncated netpbm payload: {len(payload)} of {n} bytes")
    arr = np.frombuffer(payload, dtype=np.uint8)
    return arr.reshape((h, w, 3) if channels == 3 else (h, w)).copy()


def encode(image):
    image = np.asarray(image)
    if image.dtype != np.uint8:
        if image.min(initial=0) < 0 or image.max(initial=0) > 255:
            raise ValueError("pixel values must lie in 0..255")
        image = image.astype(np.uint8)
    if image.ndim == 2:
        magic = b"P5"
    elif image.ndim == 3 and image.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"cannot encode array of shape {image.shape} as netpbm")
    h, w = image.shape[:2]
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(image).tobytes()


def read(path):
    with open(path, "rb") as fh:
        return decode(fh.read())


def write(path, image):
    with open(path, "wb") as fh:
        fh.write(encode(image))
