"""Default values shared by the data generator, the model and training runs."""

NUM_CLASSES = 4
# oscillation periods in frames; at the reference clip length of 32 frames
# these are T/2, T/3, T/4 and T/6
PERIODS = (16.0, 32.0 / 3.0, 8.0, 16.0 / 3.0)
NOISE_SIGMA = 0.05
BLOB_SIGMA = 1.5
MAX_SPEED = 0.25  # pixels per frame
FRAME_SIZE = 16
CLIP_LENGTH = 16

NEIGHBORHOOD = 3
GROUP_FACTOR = 16
CHANNELS = (16, 32, 64)

BASE_LR = 0.04
MOMENTUM = 0.9
WEIGHT_DECAY = 1e-4
BATCH_SIZE = 16
EPOCHS = 30
