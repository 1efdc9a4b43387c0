// Signed arithmetic that wraps.
uint8 TOIE0 @ 0x6E.0;
volatile int8 delta = -2;
int8 pos = 120;

ISR(TIMER0_OVF_vect) {
    delta = 0 - delta;
}

void main() {
    int8 d;
    TOIE0 = 1;
    while (1) {
        d = delta;
        pos = pos + d;
        if (pos < 100) {
            pos = 126;
        }
    }
}
