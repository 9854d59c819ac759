#include <stdio.h>
#include "spc.h"

static const char *MATRIX =
    "config_id,a,b,c\n"
    "fast,0.02,0.05,0.03\n"
    "slow,0.4,0.2,0.9\n";

int main(void) {
    SpcScheduler *s = NULL;
    if (spc_scheduler_new_from_csv(MATRIX, 0.01, 2.0, 7, SPC_CHARGE_MODE_NON_RESUMING, &s) != SPC_STATUS_OK) {
        fprintf(stderr, "new: %s\n", spc_last_error_message());
        return 1;
    }
    uint64_t steps = 0;
    if (spc_scheduler_run(s, 50.0, 0, &steps) != SPC_STATUS_OK) {
        fprintf(stderr, "run: %s\n", spc_last_error_message());
        return 1;
    }
    size_t winner = 99;
    spc_scheduler_winner(s, &winner);
    SpcCertificate cert;
    SpcStatus st = spc_certify_delta(100000000ULL, 200000000ULL, 0.1, 1.0, &cert);
    double eps = 0.0;
    spc_epsilon(1, 100, 10, &eps);
    printf("steps=%llu winner=%zu cert=%d eps=%.6f\n", (unsigned long long)steps, winner, (int)st, eps);
    if (spc_scheduler_winner(NULL, &winner) != SPC_STATUS_NULL_POINTER) return 2;
    spc_scheduler_free(s);
    return winner == 0 && steps > 0 ? 0 : 3;
}
