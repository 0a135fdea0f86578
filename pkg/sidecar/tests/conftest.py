import threading

import numpy as np
import pytest

from sidecar.app import SidecarApp, make_server
from sidecar.models import load_models

from vil.geometry import Image


def fixed_image(seed: int = 0, width: int = 32, height: int = 24) -> Image:
    rng = np.random.default_rng(seed)
    px = rng.integers(0, 256, size=(3, height, width), dtype=np.int64)
    return Image(width, height, px.astype(np.uint8))


@pytest.fixture(scope="session")
def app():
    return SidecarApp(load_models(), deterministic=True, batch_size=4)


@pytest.fixture(scope="session")
def base_url(app):
    server = make_server(app, "127.0.0.1", 0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    host, port = server.server_address[:2]
    yield f"http://{host}:{port}"
    server.shutdown()
    server.server_close()
