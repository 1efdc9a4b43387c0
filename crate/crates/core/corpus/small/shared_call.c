// One helper called from both sides.
uint8 TOIE0 @ 0x6E.0;
volatile uint8 x;
uint8 y;

uint8 wrap(uint8 v) {
    v = v + 1;
    if (v > 3) {
        return 0;
    }
    return v;
}

ISR(TIMER0_OVF_vect) {
    x = wrap(x);
}

void main() {
    uint8 k;
    TOIE0 = 1;
    while (1) {
        k = wrap(y);
        y = k;
    }
}
