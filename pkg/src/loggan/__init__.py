"""Generating forged log files with sequence GANs, and checking logs for forgery.

Subpackages and modules:

* :mod:`loggan.logmodel` - entries, timestamps, schemas, parsing
* :mod:`loggan.corpus` - train/test sampling, vocabularies, encoding
* :mod:`loggan.validator` - syntactic and semantic property checks
* :mod:`loggan.staticgen` - template-based generator
* :mod:`loggan.neural` - autodiff core, generator/discriminator networks, checkpoints
* :mod:`loggan.training` - MLE and the adversarial/cooperative schemes
* :mod:`loggan.harness` - the end-to-end experiment and its report
* :mod:`loggan.cli` - command-line entry point
"""

__version__ = "0.1.0"
