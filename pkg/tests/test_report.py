import io

import numpy as np

from splatflow.harness.report import BEGIN, END, emit_json, extract_json, plot_loss, plot_sampling
from splatflow.sampler import class_probabilities, partition
from splatflow.scene import FREE, VoxelGrid


def test_json_framing_roundtrip():
    buf = io.StringIO()
    buf.write("log line\n")
    emit_json({"a": 1, "b": [1.5, "x"]}, buf)
    buf.write("trailing\n")
    text = buf.getvalue()
    assert text.count(BEGIN) == 1 and text.count(END) == 1
    assert extract_json(text) == {"a": 1, "b": [1.5, "x"]}


def test_figures_are_byte_stable(tmp_path):
    trace = [{"iteration": i, "l_2d": 1.0 / (i + 1), "l_flow": 0.0, "l_occ": 0.0} for i in range(10)]
    a = plot_loss(trace, str(tmp_path / "a.png"))
    b = plot_loss(trace, str(tmp_path / "b.png"))
    assert open(a, "rb").read() == open(b, "rb").read()
    sem = np.full((3, 3, 1), FREE)
    sem[0] = 0
    sem[1, 0] = 1
    g = VoxelGrid(np.zeros(3), 1.0, sem, 2, visible=sem != FREE)
    p = partition(g)
    path = plot_sampling(p, class_probabilities(p, 0), class_probabilities(p, 0.5), ("t=0", "t=0.5"),
                         str(tmp_path / "s.png"))
    assert open(path, "rb").read(8) == b"\x89PNG\r\n\x1a\n"
