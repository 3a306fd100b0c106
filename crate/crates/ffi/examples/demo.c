#include <stdio.h>
#include "hompop.h"

int main(void) {
    const char *text =
        "vars: x1 x2\n"
        "minimize: x1 + x2\n"
        "subject_to:\n"
        "  x1^3 + x2 + 1 >= 0\n"
        "  x2^3 - x1 + 1 >= 0\n";
    HompopProblem *p = NULL;
    if (hompop_problem_parse(text, &p) != HOMPOP_STATUS_OK) {
        fprintf(stderr, "parse: %s\n", hompop_last_error());
        return 1;
    }
    HompopOptions opts = hompop_options_default();
    opts.max_order = 4;
    HompopReport *r = NULL;
    HompopStatus s = hompop_solve(p, &opts, &r);
    if (s != HOMPOP_STATUS_OK) {
        fprintf(stderr, "solve: %s\n", hompop_last_error());
        hompop_report_free(r);
        hompop_problem_free(p);
        return 1;
    }
    double bound = 0.0;
    hompop_report_bound(r, &bound);
    printf("bound %.6f\n", bound);
    double x[2];
    for (size_t i = 0; i < hompop_report_num_minimizers(r); i++) {
        hompop_report_minimizer(r, i, x, 2);
        printf("minimizer %.4f %.4f\n", x[0], x[1]);
    }
    hompop_report_free(r);
    hompop_problem_free(p);
    return 0;
}
