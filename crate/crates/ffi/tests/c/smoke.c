#include <math.h>
#include <stdio.h>
#include "ems_equity.h"

int main(void) {
    double miles = 0.0;
    if (eq_great_circle_miles(0.0, 0.0, 0.0, 180.0, &miles) != EQ_STATUS_OK) return 1;
    if (fabs(miles - 12437.565315561991) > 1e-6) return 2;

    uint8_t brackets[8] = {2, 2, 2, 2, 3, 3, 3, 3};
    uint8_t met[8] = {1, 0, 0, 0, 1, 1, 1, 0};
    EqModel *model = NULL;
    if (eq_model_fit(brackets, met, 8, 0, &model) != EQ_STATUS_OK) return 3;
    double p = 0.0;
    if (eq_model_predict(model, 3, &p) != EQ_STATUS_OK || fabs(p - 0.75) > 1e-9) return 4;
    eq_model_free(model);

    if (eq_model_predict(NULL, 3, &p) != EQ_STATUS_NULL_POINTER) return 5;
    char msg[64];
    size_t need = eq_last_error_message(msg, sizeof msg);
    if (need < 2 || msg[0] == '\0') return 6;
    printf("ok %.6f %.3f\n", miles, p);
    return 0;
}
