#include <stdio.h>
#include <assert.h>
#include "gemmas_ffi.h"

int main(void) {
    GemmasRun *run = NULL;
    GemmasStatus status = gemmas_run_generate(4, 3, 0.6, 1.0, 20, 42, &run);
    assert(status == GEMMAS_STATUS_OK);
    assert(gemmas_run_trace_count(run) == 3);

    char *message = NULL;
    assert(gemmas_run_validate(run, &message) == GEMMAS_STATUS_OK);
    assert(message == NULL);

    GemmasReport *report = NULL;
    GemmasAnalysisOptions options = gemmas_analysis_options_default();
    status = gemmas_analyze(run, &options, &report);
    assert(status == GEMMAS_STATUS_OK);

    double accuracy = gemmas_report_accuracy(report);
    double ids = 0.0, upr = 0.0;
    int has_ids = gemmas_report_ids(report, &ids);
    int has_upr = gemmas_report_upr(report, &upr);
    printf("accuracy=%.4f ids_defined=%d upr_defined=%d upr=%.2f\n", accuracy, has_ids, has_upr, upr);
    assert(accuracy == 1.0);
    assert(has_upr && upr == 0.0);

    char *json = gemmas_report_to_json(report);
    assert(json != NULL);
    gemmas_string_free(json);

    gemmas_report_free(report);
    gemmas_run_free(run);
    printf("c-abi smoke: ok\n");
    return 0;
}
