/* C interface for the ritzkit neural PDE solver laboratory.
 *
 * Conventions:
 *   - Functions return RITZKIT_OK (0) on success or a negative error code.
 *   - Handles are opaque; free them with the matching *_free function.
 *   - String arguments are NUL-terminated UTF-8.
 *   - ritzkit_last_error retrieves a per-thread message for the most
 *     recent failure.
 */

#ifndef RITZKIT_H
#define RITZKIT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define RITZKIT_OK 0
#define RITZKIT_ERR_NULL (-1)    /* null pointer argument */
#define RITZKIT_ERR_UTF8 (-2)    /* string is not valid UTF-8 */
#define RITZKIT_ERR_CONFIG (-3)  /* configuration / schema violation */
#define RITZKIT_ERR_NUMERIC (-4) /* numerical failure */

/* Opaque experiment configuration. */
typedef struct RitzkitConfig RitzkitConfig;

/* Opaque network (two-layer tanh model). */
typedef struct RitzkitNetwork RitzkitNetwork;

/* Static library version string. */
const char *ritzkit_version(void);

/* Copies the calling thread's last error message into buf (truncated to
 * len bytes, always NUL-terminated). Returns the full message length. */
size_t ritzkit_last_error(char *buf, size_t len);

/* Parses and validates a JSON experiment config. */
int ritzkit_config_parse(const char *json, RitzkitConfig **out);
void ritzkit_config_free(RitzkitConfig *cfg);
int ritzkit_config_set_seed(RitzkitConfig *cfg, uint64_t seed);

/* Runs the experiment; artifacts are written to the config's output
 * directory. Blocks until completion. */
int ritzkit_run(const RitzkitConfig *cfg);

/* Loads a network from the JSON written to params_final.json. */
int ritzkit_network_load(const char *json, RitzkitNetwork **out);
void ritzkit_network_free(RitzkitNetwork *net);
int ritzkit_network_dim(const RitzkitNetwork *net, size_t *out);
int ritzkit_network_eval(const RitzkitNetwork *net, const double *x,
                         size_t dim, double *out);

/* Cole-Hopf reference solution of the Burgers problem with initial
 * condition u(0,x) = -sin(pi x) on [-1,1]; requires t > 0. */
int ritzkit_burgers_reference(double t, double x, double nu, double *out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* RITZKIT_H */
