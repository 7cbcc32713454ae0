"""Image-to-point-cloud autoencoder with a maxpool-vs-stride benchmark.

A convolutional encoder compresses one RGB image to a feature map; a
deconv + fully-connected decoder emits a fixed-size 3D point cloud in
(-1,1)^3. Training minimizes the symmetric squared nearest-neighbor
(Chamfer) loss with Adam. Hot kernels run through numba by default with a
pure-numpy fallback (FI2P_BACKEND=numpy).
"""

from .chamfer import (KdTree, chamfer_auto, chamfer_exact, chamfer_grad,
                      chamfer_kdtree)
from .data import (DatasetManifest, Mesh, Sample, gen_shape, load_sample,
                   make_dataset, normalize_cloud, render, sample_surface,
                   save_sample)
from .kernels import backend_name
from .model import (ModelConfig, ModelParams, backward, build_model,
                    checkpoint_bytes, forward, load_checkpoint,
                    save_checkpoint, total_params)
from .nn import AdamState, LayerSpec, adam_step, layer_cost, xavier_init
# the train() entry point itself lives at fi2p.train.train; re-exporting it
# here would shadow the submodule
from .train import TrainConfig, TrainHistory, evaluate

__version__ = "0.1.0"

__all__ = [
    "AdamState", "DatasetManifest", "KdTree", "LayerSpec", "Mesh",
    "ModelConfig", "ModelParams", "Sample", "TrainConfig", "TrainHistory",
    "adam_step", "backend_name", "backward", "build_model", "chamfer_auto",
    "chamfer_exact", "chamfer_grad", "chamfer_kdtree", "checkpoint_bytes",
    "evaluate",
    "forward", "gen_shape", "layer_cost", "load_checkpoint", "load_sample",
    "make_dataset", "normalize_cloud", "render", "sample_surface",
    "save_checkpoint", "save_sample", "total_params", "xavier_init",
    "__version__",
]
