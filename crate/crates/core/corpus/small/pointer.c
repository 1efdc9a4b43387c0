// A handler stores through a pointer chosen by the main program.
uint8 INT0_EN @ 0x3D.0;
uint8 slot_a;
uint8 slot_b;
volatile uint8 which;

ISR(INT0_vect) {
    uint8 *p = &slot_a;
    if (which) {
        p = &slot_b;
    }
    *p = *p + 1;
    if (*p > 2) {
        *p = 0;
    }
}

void main() {
    INT0_EN = 1;
    while (1) {
        cli();
        which = 1 - which;
        sei();
    }
}
