// Unlocked read of a 16-bit counter.
uint8 TOIE0 @ 0x6E.0;
volatile uint16 ticks = 254;
uint16 seen;

ISR(TIMER0_OVF_vect) {
    if (ticks < 258) {
        ticks = ticks + 1;
    }
}

void main() {
    TOIE0 = 1;
    while (1) {
        seen = ticks;
    }
}
