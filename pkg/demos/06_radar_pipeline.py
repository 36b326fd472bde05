# coding: utf-8

# # From raw radar grids to training windows
#
# Raw KMA composites arrive in hundredths of dBZ on a 2304x2880 grid. They
# are clipped, scaled, thinned by eight and centre-cropped, then cut into
# gap-free input/target windows.

# In[1]:

import datetime as dt

import numpy as np

from radarcast.datapipe import (RadarGrid, build_windows, crop_offsets, dbz_to_rain, get_profile,
                                preprocess_grid, rain_to_dbz, time_split)

kma = get_profile("kma")
raw = np.random.default_rng(0).integers(-500, 5000, (2304, 2880)).astype(np.float32)
grid = RadarGrid(0, raw, "raw_0p01dBZ")
out = preprocess_grid(grid, kma)
print(out.data.shape, out.unit, out.resolution_km, crop_offsets((2304, 2880), 8, (256, 256)))


# Rain-rate thresholds in dBZ via Z = 200 R^1.6.

# In[2]:

mmh = np.array([0.5, 2, 5, 10, 30])
print(np.round(rain_to_dbz(mmh), 2), np.allclose(dbz_to_rain(rain_to_dbz(mmh)), mmh))


# Windows never bridge a missing frame. Drop one stamp out of a day of
# 10-minute data and count what survives.

# In[3]:

t0 = int(dt.datetime(2022, 12, 31, 20, tzinfo=dt.timezone.utc).timestamp())
stamps = [t0 + 600 * i for i in range(144)]
del stamps[60]
samples = build_windows(stamps, kma)
print(len(samples), "windows;", {k: len(v) for k, v in time_split(samples, kma).items()})
