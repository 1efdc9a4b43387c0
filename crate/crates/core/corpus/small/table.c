// The handler reads a table entry selected by a shared index.
uint8 TOIE0 @ 0x6E.0;
uint8 table[4];
volatile uint8 idx;
volatile uint8 out;

ISR(TIMER0_OVF_vect) {
    out = table[idx];
}

void main() {
    uint8 i;
    for (i = 0; i < 4; i++) {
        table[i] = i * 3;
    }
    TOIE0 = 1;
    while (1) {
        if (idx < 3) {
            idx = idx + 1;
        } else {
            idx = 0;
        }
    }
}
