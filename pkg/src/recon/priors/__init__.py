"""Denoisers used to build the prior image."""
from .convnet import (
    ConvNet,
    ConvNetSpec,
    LayerSpec,
    TrainConfig,
    TrainingError,
    TrainResult,
    convnet_forward,
    convnet_train,
    dataset_loss,
    load_cnw,
    loss_and_grad,
    save_cnw,
    write_train_log,
)
from .dictionary import (
    DictionaryModel,
    itkrm_train,
    load_dictionary,
    omp_batch,
    omp_sparse_code,
    save_dictionary,
    sparse_approx_error,
)
from .models import (
    ConvNetPrior,
    DictionaryPrior,
    GaussianSmoothPrior,
    IdentityPrior,
    PriorModel,
    denoise_patch,
    dictionary_prior,
    gaussian_kernel,
)
