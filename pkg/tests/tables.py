"""Architecture rows for the 128x128 configuration, transcribed by hand.

Each row is (input shape, output shape, kind, kernel, stride, padding, norm).
"""

MCD_ROWS = [
    ((3, 128, 128), (64, 128, 128), "conv", 7, 1, 3, False),
    ((64, 128, 128), (64, 64, 64), "conv", 4, 2, 1, True),
    ((64, 64, 64), (128, 32, 32), "conv", 4, 2, 1, True),
    ((128, 32, 32), (256, 16, 16), "conv", 4, 2, 1, True),
    ((256, 16, 16), (512, 8, 8), "conv", 4, 2, 1, True),
    ((512, 8, 8), (512, 4, 4), "conv", 4, 2, 1, True),
    ((512, 4, 4), (512, 2, 2), "conv", 4, 2, 1, True),
]


def mcd_head_row(n):
    return ((512, 2, 2), (n, 1, 1), "conv", 4, 2, 1, False)


DECODER_ROWS = [
    ((1024, 2, 2), (512, 4, 4), "deconv", 4, 2, 1, True),
    ((1024, 4, 4), (512, 8, 8), "deconv", 4, 2, 1, True),
    ((1024, 8, 8), (256, 16, 16), "deconv", 4, 2, 1, True),
    ((512, 16, 16), (128, 32, 32), "deconv", 4, 2, 1, True),
    ((256, 32, 32), (64, 64, 64), "deconv", 4, 2, 1, True),
    ((64, 64, 64), (64, 128, 128), "deconv", 4, 2, 1, True),
    ((64, 128, 128), (3, 128, 128), "deconv", 7, 1, 3, False),
]


def conv_out(size, k, s, p):
    return (size + 2 * p - k) // s + 1


def deconv_out(size, k, s, p):
    return (size - 1) * s - 2 * p + k


def symbolic_count(rows):
    """k*k*c_in*c_out + c_out per layer, plus 2*c_out for batch-norm scale and offset."""
    per_layer = []
    for (c_in, _, _), (c_out, _, _), _, k, _, _, norm in rows:
        per_layer.append(k * k * c_in * c_out + c_out + (2 * c_out if norm else 0))
    return per_layer
