"""Touchstone v1 (.sNp) export and import for S-parameter blocks.

Format written: `# Hz S RI R <z_ref>`, one frequency per record block,
matrix entries row-major with at most four complex pairs per data line.
The 2-port case uses the standard S11 S21 S12 S22 column order.
"""

from __future__ import annotations

import numpy as np

from tsvnet.core import FrequencyGrid


def write_touchstone(block, path):
    n_ports = block.data.shape[1]
    lines = [
        f"! {n_ports}-port S-parameters, generated by tsvnet",
        "! port order: top ports in ascending signal-cell index, then bottom ports",
        f"! signal cells: {list(block.signal_cells)}",
        f"# Hz S RI R {block.z_ref:g}",
    ]
    for fi, f in enumerate(block.frequencies):
        s = block.data[fi]
        if n_ports == 2:
            entries = [s[0, 0], s[1, 0], s[0, 1], s[1, 1]]
            vals = " ".join(f"{e.real:.12e} {e.imag:.12e}" for e in entries)
            lines.append(f"{f:.10e} {vals}")
        else:
            lines.append(f"{f:.10e}")
            for i in range(n_ports):
                row = s[i]
                for start in range(0, n_ports, 4):
                    chunk = row[start : start + 4]
                    lines.append(
                        "  "
                        + " ".join(f"{e.real:.12e} {e.imag:.12e}" for e in chunk)
                    )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _port_count_from_suffix(path):
    name = str(path).lower()
    if name.endswith("p"):
        digits = ""
        for ch in reversed(name[:-1]):
            if ch.isdigit():
                digits = ch + digits
            else:
                break
        if digits:
            return int(digits)
    return None


def read_touchstone(path):
    """Read a Touchstone v1 file written by `write_touchstone`.

    Returns (frequencies, data, z_ref) with data of shape (F, n, n).
    """
    z_ref = 50.0
    numbers = []
    signal_cells = None
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("!"):
                if "signal cells:" in line:
                    inner = line.split(":", 1)[1].strip().strip("[]")
                    if inner:
                        signal_cells = tuple(int(x) for x in inner.split(","))
                continue
            if line.startswith("#"):
                tokens = line[1:].split()
                if "R" in tokens:
                    z_ref = float(tokens[tokens.index("R") + 1])
                if tokens[0].lower() != "hz" or "ri" not in [t.lower() for t in tokens]:
                    raise ValueError("only 'Hz S RI' touchstone files are supported")
                continue
            numbers.extend(float(x) for x in line.split())
    n = _port_count_from_suffix(path)
    if n is None:
        raise ValueError("cannot infer port count from file suffix")
    per_freq = 1 + 2 * n * n
    if len(numbers) % per_freq != 0:
        raise ValueError("malformed touchstone data")
    n_freq = len(numbers) // per_freq
    freqs = []
    data = np.empty((n_freq, n, n), dtype=complex)
    for k in range(n_freq):
        chunk = numbers[k * per_freq : (k + 1) * per_freq]
        freqs.append(chunk[0])
        vals = np.array(chunk[1:]).reshape(-1, 2)
        mat = (vals[:, 0] + 1j * vals[:, 1]).reshape(n, n)
        if n == 2:
            mat = np.array([[mat[0, 0], mat[1, 0]], [mat[0, 1], mat[1, 1]]])
        data[k] = mat
    return FrequencyGrid(tuple(freqs)), data, z_ref, signal_cells
