#include <stdio.h>
#include "blowup.h"

int main(void) {
    const char *json = "{\"dimension\":2,\"seed\":[0,0,0],\"patches\":[{\"center\":[0.3,0],\"radius\":0.05}]}";
    BlowupField *field = NULL;
    if (blowup_field_synthetic(json, &field) != BLOWUP_STATUS_OK) {
        fprintf(stderr, "%s\n", blowup_last_error());
        return 1;
    }
    BlowupSeries *series = NULL;
    BlowupStatus st = blowup_series_compute(field, 0.0, 0.6931471805599453, 8, 4, 0, 0, &series);
    if (st != BLOWUP_STATUS_OK) {
        fprintf(stderr, "%s\n", blowup_last_error());
        blowup_field_free(field);
        return 1;
    }
    size_t len = 0;
    double b[4];
    blowup_series_len(series, &len);
    blowup_series_b(series, len - 1, b);
    printf("%zu records, B(end) = [%g %g; %g %g]\n", len, b[0], b[1], b[2], b[3]);
    blowup_series_free(series);
    blowup_field_free(field);
    return 0;
}
