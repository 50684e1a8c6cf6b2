#include <stdio.h>
#include <string.h>
#include "poas.h"

int main(int argc, char **argv) {
    if (argc != 2) return 10;
    PoasProfile *p = NULL;
    if (poas_profile_load(argv[1], &p) != POAS_STATUS_OK) {
        fprintf(stderr, "%s\n", poas_last_error());
        return 11;
    }
    PoasSchedule *s = NULL;
    if (poas_plan(p, 30000, 30000, 30000, &s) != POAS_STATUS_OK) return 12;
    uint64_t rows[8];
    size_t n = 0;
    if (poas_schedule_rows(s, rows, 8, &n) != POAS_STATUS_OK) return 13;
    uint64_t total = 0;
    for (size_t i = 0; i < n; i++) total += rows[i];
    double makespan = 0;
    poas_schedule_makespan(s, &makespan);
    if (poas_plan(p, 30000, 30000, 30001, &s) != POAS_STATUS_UNSATISFIABLE) return 14;
    printf("devices %zu rows %llu makespan %.6f\n", n, (unsigned long long)total, makespan);
    poas_schedule_free(s);
    poas_profile_free(p);
    return total == 30000 ? 0 : 15;
}
