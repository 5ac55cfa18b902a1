/* Partitions the RBTS state space to D9 and estimates EENS by FMCS. */
#include <stdio.h>

#include "gridlattice.h"

static int check(GlStatus status) {
  if (status != GL_STATUS_OK) {
    fprintf(stderr, "error %d: %s\n", (int)status, gl_last_error_message());
    return 1;
  }
  return 0;
}

int main(int argc, char **argv) {
  const char *source = argc > 1 ? argv[1] : "rbts";
  GlSystem *sys = NULL;
  GlLedger *ledger = NULL;
  GlStopCriteria stop = {true, 9, 0, 0.0};
  GlIndexReport report;
  GlFailedLattice first;
  size_t ids[8];
  size_t failed = 0;
  int rc = 1;

  if (check(gl_system_load(source, &sys))) return 1;
  if (check(gl_dichotomy_run(sys, &stop, false, &ledger))) goto done;
  if (check(gl_ledger_failed_count(ledger, &failed))) goto done;
  if (failed > 0) {
    if (check(gl_ledger_failed_lattice(ledger, 0, &first, ids, 8))) goto done;
    printf("first failed lattice: component %zu, shed %.1f MW, p = %.7f\n", ids[0], first.shed_mw,
           first.probability);
  }
  if (check(gl_fmcs(sys, ledger, 0.05, 0, 42, &report))) goto done;
  printf("failed lattices: %zu\nLOLP: %.5f%%\nEENS: %.4f MW (beta %.4f, %llu samples)\n", failed,
         100.0 * report.lolp, report.eens, report.beta, (unsigned long long)report.samples);
  rc = 0;

done:
  gl_ledger_free(ledger);
  gl_system_free(sys);
  return rc;
}
