/* Minimal C consumer of the bloch-ere C ABI.
 *
 * Build (from the workspace root, after `cargo build -p bloch-ere-ffi --release`):
 *   cc crates/ffi/examples/demo.c \
 *      -Icrates/ffi/include \
 *      target/release/libbloch_ere_ffi.a \
 *      -lm -lpthread -ldl -o demo
 */
#include "bloch_ere.h"
#include <stdio.h>

int main(void) {
    BeSpectrum *spec = NULL;
    BeStatus status = be_spectrum_lorentzian(0.0, 20.0, 0.2, &spec);
    if (status != BE_OK) {
        char msg[256];
        be_last_error_message(msg, sizeof msg);
        fprintf(stderr, "spectrum: %s (%s)\n", msg, be_status_name(status));
        return 1;
    }

    enum { POINTS = 20 };
    double t[POINTS + 1], n_bar[POINTS + 1], stderr_[POINTS + 1];
    status = be_simulate(spec, BE_COLORED_NOISE, 0, 400, 10.0, POINTS, 42,
                         t, n_bar, stderr_);
    if (status != BE_OK) {
        char msg[256];
        be_last_error_message(msg, sizeof msg);
        fprintf(stderr, "simulate: %s (%s)\n", msg, be_status_name(status));
        be_spectrum_free(spec);
        return 1;
    }

    double oracle[POINTS + 1];
    be_ere_solve(1.0, 0.2, -1.0, t, POINTS + 1, oracle);

    printf("t,n_bar,stderr,rate_equation\n");
    for (int i = 0; i <= POINTS; ++i) {
        printf("%g,%g,%g,%g\n", t[i], n_bar[i], stderr_[i], oracle[i]);
    }

    be_spectrum_free(spec);
    return 0;
}
