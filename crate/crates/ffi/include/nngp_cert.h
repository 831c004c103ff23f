#ifndef NNGP_CERT_H
#define NNGP_CERT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NngpRegion {
  NNGP_REGION_BALL = 0,
  NNGP_REGION_SEGMENT = 1,
} NngpRegion;

typedef enum NngpStatus {
  NNGP_STATUS_OK = 0,
  NNGP_STATUS_NULL_POINTER = 1,
  NNGP_STATUS_INVALID_UTF8 = 2,
  NNGP_STATUS_INVALID_ARGUMENT = 3,
  NNGP_STATUS_ARCH = 4,
  NNGP_STATUS_KERNEL = 5,
  NNGP_STATUS_CERTIFICATE = 6,
  NNGP_STATUS_NETWORK = 7,
  NNGP_STATUS_PANIC = 8,
} NngpStatus;

/*
 Opaque architecture handle.
 */
typedef struct NngpArch NngpArch;

/*
 Opaque random-network handle.
 */
typedef struct NngpNetwork NngpNetwork;

/*
 Certified radii for one start point.
 */
typedef struct NngpCertificate {
  size_t n;
  double delta;
  double m;
  double norm2_x0;
  double a_n;
  double r_l1;
  double r_segment;
} NngpCertificate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failure on this thread, or NULL. Valid until the next
 failing call on the same thread.
 */
const char *nngp_last_error(void);

/*
 Parse a JSON architecture document.

 # Safety
 `json` must be a NUL-terminated string; `out` must be writable.
 */
enum NngpStatus nngp_arch_load(const char *json, struct NngpArch **out);

/*
 # Safety
 `arch` must come from `nngp_arch_load` and not be freed twice. NULL is ignored.
 */
void nngp_arch_free(struct NngpArch *arch);

/*
 # Safety
 `arch` must be a live handle; `out` must be writable.
 */
enum NngpStatus nngp_arch_input_len(const struct NngpArch *arch, size_t *out);

/*
 Smoothness constants `C` and `M` of the architecture.

 # Safety
 `arch` must be a live handle; `c` and `m` must be writable.
 */
enum NngpStatus nngp_arch_smoothness(const struct NngpArch *arch, double *c, double *m);

/*
 Kernel matrix of `count` points stored row-major (`count * input_len`
 doubles, channel-major within a point); writes `count * count` doubles.

 # Safety
 Buffers must have the sizes stated above.
 */
enum NngpStatus nngp_kernel_matrix(const struct NngpArch *arch,
                                   const double *points,
                                   size_t count,
                                   double *out);

/*
 `Psi(t)` for `t` in `[-1, 1]`.

 # Safety
 `out` must be writable.
 */
enum NngpStatus nngp_psi(double t, double *out);

/*
 # Safety
 `out` must be writable.
 */
enum NngpStatus nngp_dudley_constant(size_t n, double *out);

/*
 # Safety
 `out` must be writable.
 */
enum NngpStatus nngp_certify(double norm2_x0,
                             double delta,
                             double m,
                             size_t n,
                             struct NngpCertificate *out);

/*
 Failure probability bound of a region of size `r`; saturates at 1.
 */
double nngp_failure_prob(double r, double norm2_x0, double m, size_t n, enum NngpRegion region);

/*
 Covering-number bound of the unit l1 ball by Euclidean `eps`-balls.
 */
double nngp_covering_bound(size_t n, double eps);

/*
 Draw a random network with `n_widths` hidden widths.

 # Safety
 `arch` must be a live handle, `widths` must hold `n_widths` values, `out` must be writable.
 */
enum NngpStatus nngp_network_new(const struct NngpArch *arch,
                                 const size_t *widths,
                                 size_t n_widths,
                                 uint64_t seed,
                                 struct NngpNetwork **out);

/*
 # Safety
 `net` must come from `nngp_network_new` and not be freed twice. NULL is ignored.
 */
void nngp_network_free(struct NngpNetwork *net);

/*
 Scalar output at `x` (`len` doubles, channel-major).

 # Safety
 `net` must be a live handle, `x` must hold `len` values, `out` must be writable.
 */
enum NngpStatus nngp_network_forward(const struct NngpNetwork *net,
                                     const double *x,
                                     size_t len,
                                     double *out);

/*
 Gradient of the output at `x`, written to `grad` (`len` doubles).

 # Safety
 `net` must be a live handle; `x` and `grad` must hold `len` values.
 */
enum NngpStatus nngp_network_gradient(const struct NngpNetwork *net,
                                      const double *x,
                                      size_t len,
                                      double *grad);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NNGP_CERT_H */
