# coding: utf-8

# # Scoring a forecast
#
# Categorical scores threshold both fields and count hits, misses and false
# alarms. Pooled and neighbourhood variants soften the penalty for small
# displacements.

# In[1]:

import numpy as np

from radarcast import evaluate
from radarcast.datapipe import advected_blobs
from radarcast.verify import contingency, csi, hss_score, pooled_csi

pred = np.array([[1.0, 1.0], [0.0, 0.0]])
obs = np.array([[1.0, 0.0], [1.0, 0.0]])
table = contingency(pred, obs, 0.5)
print(table, csi(table), hss_score(table))


# A blob that lands two pixels off scores zero at full resolution but
# earns credit once both fields are max-pooled.

# In[2]:

a, b = np.zeros((32, 32)), np.zeros((32, 32))
a[10, 10] = b[11, 12] = 1.0
print([pooled_csi(a, b, 0.5, k) for k in (1, 4, 16)])


# A persistence forecast of drifting rain cells: the last input frame is
# repeated for every lead time.

# In[3]:

frames = advected_blobs(12, (32, 32), n_blobs=4, seed=3)
obs = frames[6:12][None, ..., None]
persistence = np.repeat(frames[5:6], 6, axis=0)[None, ..., None]
report = evaluate(persistence, obs, [0.1, 0.3, 0.5], pools=(1, 4, 16), neighbors=(3, 9), rhd_region=8)
for row in report.rows():
    print(row)
print("all scores in range:", report.ranges_ok())
