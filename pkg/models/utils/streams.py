import numpy as np
from credmark.cmf.model.errors import ModelInputError
from models.dtos.scenario import Purpose, StreamLabel

PURPOSE_CODES = {
    Purpose.design: 0,
    Purpose.validation: 1,
    Purpose.certify: 2,
    Purpose.instance: 3,
}


def stream_generator(master_seed: int, label: StreamLabel) -> np.random.Generator:
    """
    Random generator for one (run, iteration, purpose) stream.

    The label becomes the spawn key of a SeedSequence rooted at the master seed,
    which keys a Philox counter-based bit generator. No state is shared between
    streams, so any stream can be rebuilt from its label alone and streams can be
    consumed in any order or process.
    """
    if master_seed < 0:
        raise ModelInputError(f'Master seed must be nonnegative, got {master_seed}')
    seq = np.random.SeedSequence(
        entropy=master_seed,
        spawn_key=(label.run, label.iteration, PURPOSE_CODES[Purpose(label.purpose)]))
    return np.random.Generator(np.random.Philox(seq))
