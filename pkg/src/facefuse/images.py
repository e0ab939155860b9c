"""PNG image I/O helpers (Pillow-backed).

Float images use range [0, 1]; files store 8-bit channels unless noted.
"""

import numpy as np
from PIL import Image


def to_uint8(img):
    """Clamp a float image in [0, 1] to uint8; uint8 passes through."""
    arr = np.asarray(img)
    if arr.dtype == np.uint8:
        return arr
    return (np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_image(path, img):
    """Write an (H, W), (H, W, 3) or (H, W, 4) image as PNG."""
    arr = to_uint8(img)
    if arr.ndim == 2:
        mode = "L"
    elif arr.shape[2] == 3:
        mode = "RGB"
    elif arr.shape[2] == 4:
        mode = "RGBA"
    else:
        raise ValueError("unsupported channel count %d" % arr.shape[2])
    Image.fromarray(arr, mode).save(path, format="PNG")


def save_image_u16(path, img):
    """Write an (H, W) float image in [0, 1] as 16-bit grayscale PNG."""
    arr = np.clip(np.asarray(img, dtype=float), 0.0, 1.0)
    arr = (arr * 65535.0 + 0.5).astype(np.uint16)
    Image.fromarray(arr).save(path, format="PNG")


def load_image_rgb(path):
    """Read an image file as (H, W, 3) float32 in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return arr / 255.0


def load_image_gray(path):
    """Read an image file as (H, W) float32 in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float32)
    return arr / 255.0


def rgb_to_gray(img):
    """Luma conversion of an (H, W, 3) float image to (H, W)."""
    arr = np.asarray(img, dtype=np.float32)
    return arr[..., 0] * 0.299 + arr[..., 1] * 0.587 + arr[..., 2] * 0.114
