#include <math.h>
#include <stdio.h>
#include <string.h>

#include "lidar_ot.h"

#define CHECK(call)                                                      \
    do {                                                                 \
        LidarOtStatus s_ = (call);                                       \
        if (s_ != LIDAR_OT_STATUS_OK) {                                  \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_,            \
                    lidar_ot_last_error());                              \
            return 1;                                                    \
        }                                                                \
    } while (0)

int main(void) {
    double a[] = {0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1};
    double b[] = {0.1, 0, 0, 1.1, 0, 0, 0.1, 1, 0, 0.1, 0, 1};
    LidarOtCloud *x = NULL, *y = NULL;
    LidarOtDirections *dirs = NULL;
    double v = -1.0;
    double grad[12];

    CHECK(lidar_ot_cloud_new(a, 4, &x));
    CHECK(lidar_ot_cloud_new(b, 4, &y));
    CHECK(lidar_ot_directions_sample(64, 7, &dirs));
    if (lidar_ot_cloud_len(x) != 4 || lidar_ot_directions_len(dirs) != 64) return 1;

    CHECK(lidar_ot_emd_exact(x, y, LIDAR_OT_REDUCTION_MEAN, &v));
    if (fabs(v - 0.1) > 1e-12) return 1;
    CHECK(lidar_ot_swd(x, y, dirs, &v));
    if (!(v > 0.0)) return 1;
    CHECK(lidar_ot_swd_gradient(x, y, dirs, grad, 4));

    if (lidar_ot_hausdorff(x, NULL, &v) != LIDAR_OT_STATUS_NULL_POINTER) return 1;
    if (strlen(lidar_ot_last_error()) == 0) return 1;
    if (lidar_ot_swd_gradient(x, y, dirs, grad, 2) != LIDAR_OT_STATUS_BUFFER_TOO_SMALL) return 1;

    lidar_ot_directions_free(dirs);
    lidar_ot_cloud_free(y);
    lidar_ot_cloud_free(x);
    printf("ok %s\n", lidar_ot_version());
    return 0;
}
